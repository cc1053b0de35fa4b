"""Standard normal distribution function.

``normal_cdf`` is pinned to ``scipy.special.ndtr`` (Cephes): ``0.5 * erfc(-x/sqrt 2)``
for ``|x| > 1/sqrt 2`` and ``0.5 + 0.5 * erf(x/sqrt 2)`` otherwise, with
erf/erfc from Cephes rational approximations.  Absolute error is below 1e-15
on the real line; relative error in the lower tail stays near machine
precision because the erfc branch avoids cancellation.
"""

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 0.3989422804014327


def normal_cdf(x):
    return ndtr(x)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)
