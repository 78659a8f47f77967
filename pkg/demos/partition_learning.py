"""Learning which coordinates to explore jointly.

With fewer particles than 2^d the engine explores blocks of coordinates
separately and re-learns the blocks from the weighted correlation of the
auxiliary particles. The covariates of this 12-dimensional linear median
regression form two equicorrelated groups, x2..x6 and x7..x12, so the
coefficients within each group are strongly coupled and the learned
partition should keep each group inside one block.

    python3 demos/partition_learning.py
"""

import numpy as np

from perturbed_bayes import AlgoConfig, GeneratorStream, PerturbedBayes, QuantileRegression
from perturbed_bayes.data import gen_linear


def grouped_covariance(sizes, within=0.8):
    S = np.zeros((sum(sizes), sum(sizes)))
    start = 0
    for n in sizes:
        S[start:start + n, start:start + n] = within
        start += n
    np.fill_diagonal(S, 1.0)
    return S


def main():
    d = 12
    truth = np.random.default_rng(5).uniform(1.0, 5.0, size=d)
    Sigma_x = grouped_covariance((5, 6))
    stream = GeneratorStream(lambda rng, n: gen_linear(rng, n, truth, Sigma_x), seed=1)
    cfg = AlgoConfig(N=2000, M=2, t1=5, mu0=list(truth - 10.0), N_aux=4000, seed=0)
    eng = PerturbedBayes(QuantileRegression("linear", 0.5, d), cfg, truth=truth)
    last = None

    def show(row):
        nonlocal last
        if row.partition != last:
            print(f"t={row.t:>7}  error={row.error:7.4f}  partition {row.partition}")
            last = row.partition

    eng.listener = show
    rep = eng.run(stream, 300_000)
    eng.close()
    print(f"final error {rep.rows[-1].error:.4f}; blocks {eng.partition.digest()}")


if __name__ == "__main__":
    main()
