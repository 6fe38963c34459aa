#!/usr/bin/env python3
"""Writes a random graph and its PageRank after a fixed number of steps.

The ranks come from a dense power iteration written here in plain Python so
the fixture does not share code with the C++ oracle or engine.
"""
import argparse
import random


def power_iteration(adj, steps, d=0.85):
    n = len(adj)
    r = [1.0 / n] * n
    for _ in range(steps):
        nxt = [0.0] * n
        dangling = 0.0
        for u, dests in enumerate(adj):
            if not dests:
                dangling += r[u]
                continue
            for v in dests:
                nxt[v] += r[u] / len(dests)
        r = [(1 - d) / n + d * (nxt[v] + dangling / n) for v in range(n)]
    return r


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vertices", type=int, default=50)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--graph", required=True)
    ap.add_argument("--ranks", required=True)
    a = ap.parse_args()
    rng = random.Random(a.seed)
    adj = []
    for u in range(a.vertices):
        k = 0 if rng.random() < 0.1 else rng.randint(1, 5)
        adj.append(sorted(rng.sample([v for v in range(a.vertices) if v != u], k)))
    with open(a.graph, "w") as f:
        for u, dests in enumerate(adj):
            f.write(" ".join(str(x) for x in [u] + dests) + "\n")
    with open(a.ranks, "w") as f:
        for x in power_iteration(adj, a.steps):
            f.write(f"{x:.17g}\n")


if __name__ == "__main__":
    main()
