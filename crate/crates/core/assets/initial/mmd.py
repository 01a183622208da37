# EVOLVE-BLOCK-START
"""Constructor for 16 points maximizing the min/max distance ratio."""
import random


def min_max_dist_dim2_16():
    rng = random.Random(42)
    return [[rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)] for _ in range(16)]


# EVOLVE-BLOCK-END

if __name__ == "__main__":
    import json

    print(json.dumps({"points": [list(map(float, p)) for p in min_max_dist_dim2_16()]}))
