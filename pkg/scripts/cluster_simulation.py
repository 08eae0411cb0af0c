"""Repeated two-group simulations clustered with fCUBT.

Prints the adjusted Rand index of the grown and of the joined partition
for each replicate, then their means.

    python3 scripts/cluster_simulation.py --n-rep 20 --n-obs 300
"""

import argparse
import time

import numpy as np
from sklearn.metrics import adjusted_rand_score

from fundata import ClusterSpec, FcubtConfig, grow, make_basis, simulate_kl


def simulate(n_obs, seed, scale):
    basis = make_basis("wiener", 3, np.linspace(0, 1, 101))
    centers = scale * np.array([[2, -1], [-0.5, 1.5], [0, 0]])
    std = np.array([[2, 1], [0.5, 1], [1, 1]])
    return simulate_kl(basis, ClusterSpec(centers, std), n_obs, seed=seed)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-rep", type=int, default=10)
    parser.add_argument("--n-obs", type=int, default=200)
    parser.add_argument("--scale", type=float, default=3.0, help="multiplies the centers")
    parser.add_argument("--n-comp", type=float, default=0.95)
    parser.add_argument("--min-size", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    grown, joined = [], []
    print("rep,leaves,classes,ari_grow,ari_join,seconds")
    for rep in range(args.n_rep):
        sim = simulate(args.n_obs, args.seed + rep, args.scale)
        start = time.perf_counter()
        tree = grow(sim.data, FcubtConfig(n_comp=args.n_comp, min_size=args.min_size,
                                          seed=args.seed + rep))
        leaves = tree.n_classes
        grown.append(adjusted_rand_score(sim.labels, tree.labels))
        joined.append(adjusted_rand_score(sim.labels, tree.join(sim.data)))
        elapsed = time.perf_counter() - start
        print(f"{rep},{leaves},{tree.n_classes},{grown[-1]:.4f},{joined[-1]:.4f},{elapsed:.2f}")
    print(f"mean,,,{np.mean(grown):.4f},{np.mean(joined):.4f},")


if __name__ == "__main__":
    main()
