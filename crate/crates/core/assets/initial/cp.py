# EVOLVE-BLOCK-START
"""Constructor for 26 circles in the unit square."""


def construct_packing():
    # Uniform small circles on a 6x5 grid; no optimization.
    radius = 0.0365
    centers = []
    for k in range(26):
        col, row = k % 6, k // 6
        centers.append([(col + 0.5) / 6.0, (row + 0.5) / 5.0])
    radii = [radius] * 26
    return centers, radii, sum(radii)


# EVOLVE-BLOCK-END

if __name__ == "__main__":
    import json

    centers, radii, _ = construct_packing()
    print(json.dumps({"centers": centers, "radii": radii}))
