from typing import NamedTuple

import numpy as np

from ..utils.exceptions import InvalidArgumentError


class EffectiveSampleSize(NamedTuple):
    ess: float
    degenerate: bool = False

    def __float__(self):
        return float(self.ess)


def autocorrelation(chain):
    """Normalised autocorrelation of a 1-d chain at all lags, computed with an FFT."""
    chain = np.asarray(chain, dtype=np.float64)
    n = chain.shape[0]
    centred = chain - chain.mean()

    size = 2 ** int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centred, n=size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n]

    return acov / acov[0]


def integrated_autocorrelation_time(chain):
    """Integrated autocorrelation time from Geyer's initial monotone positive sequence.

    Autocorrelations are summed in consecutive lag pairs `rho_2k + rho_2k+1` until the first
    non-positive pair; pair sums are forced to be non-increasing.
    """
    rho = autocorrelation(chain)
    n_pairs = rho.shape[0] // 2

    pair_sums = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    total = 0.0
    previous = np.inf
    for pair_sum in pair_sums:
        if pair_sum <= 0:
            break
        pair_sum = min(pair_sum, previous)
        total += pair_sum
        previous = pair_sum

    # tau = -1 + 2 * sum of pair sums (the lag 0 term enters once)
    return max(2.0 * total - 1.0, 1e-12)


def effective_sample_size(chain):
    """Effective sample size `M / tau` of a scalar chain, capped at `M`.

    :param chain: chain values, at least 10 of them
    :type chain: array-like
    :return: ESS and a flag set for constant chains (whose ESS is 0)
    :rtype: EffectiveSampleSize
    """
    chain = np.asarray(chain, dtype=np.float64).reshape(-1)
    if chain.shape[0] < 10:
        raise InvalidArgumentError(f"ESS needs a chain of length >= 10, got {chain.shape[0]}.")
    if not np.all(np.isfinite(chain)):
        raise InvalidArgumentError("Chain contains non-finite values.")

    if np.ptp(chain) == 0:
        return EffectiveSampleSize(0.0, degenerate=True)

    tau = integrated_autocorrelation_time(chain)
    return EffectiveSampleSize(float(min(chain.shape[0] / tau, chain.shape[0])))
