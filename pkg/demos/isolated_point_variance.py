"""Additive variance, measured on an actual trained network.

Train small score networks on a single repeated point (every ambient
direction is normal, n_perp = n) at one noise scale sigma = 0.1, with
increasing spectral-norm regularization gamma.  The score slope away from
the point should approach 1 / (sigma^2 + gamma): the regularizer adds
gamma to the variance the network believes the data has.

Desk-toy settings (8 ambient dims, 4000 iterations) finish in well under
a minute; the benchmark-scale version of this experiment is
scoredim.experiments.isolated_point_slopes, which uses 16 dims and 20000
iterations.
"""

import numpy as np

from scoredim import gen_isolated_point, single_scale_config, train
from scoredim.experiments import measure_slope


def main():
    sigma, dim = 0.1, 8
    data = gen_isolated_point(dim, 64)
    print(f"dataset: one point at the origin of R^{dim}, sigma = {sigma}\n")
    print("gamma    learned 1/slope    sigma^2 + gamma    rel err")
    for gamma in (0.0, 0.01, 0.05):
        cfg = single_scale_config(sigma, gamma=gamma, iterations=4000,
                                  hidden=(32, 32), seed=11,
                                  log_every=1000)
        model = train(data, cfg).model
        slope = measure_slope(model, np.zeros(dim), np.ones(dim), sigma)
        learned = 1.0 / slope
        predicted = sigma ** 2 + gamma
        rel = abs(learned - predicted) / predicted
        print(f"{gamma:<8g} {learned:<18.5f} {predicted:<18.5f} {rel:.3f}")

    print("\nEvery row should track sigma^2 + gamma; training longer and")
    print("wider (see isolated_point_slopes) tightens the agreement.")


if __name__ == "__main__":
    main()
