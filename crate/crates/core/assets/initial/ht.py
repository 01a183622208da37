# EVOLVE-BLOCK-START
"""Constructor for 11 points in the equilateral triangle."""


def heilbronn_triangle11():
    return [[0.0, 0.0] for _ in range(11)]


# EVOLVE-BLOCK-END

if __name__ == "__main__":
    import json

    print(json.dumps({"points": [list(map(float, p)) for p in heilbronn_triangle11()]}))
