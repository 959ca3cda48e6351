"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is preferred when it imported cleanly; set
ORDSENS_PURE_PYTHON=1 to force the numpy implementation (used by the parity
tests and the benchmark).
"""

import os

from . import pykernels as _py

if os.environ.get("ORDSENS_PURE_PYTHON"):
    _impl = _py
    IMPL_NAME = "python"
else:
    try:
        from . import _ckernels as _impl
        IMPL_NAME = "compiled"
    except ImportError:
        _impl = _py
        IMPL_NAME = "python"

LINK_PROBIT = _py.LINK_PROBIT
LINK_LOGIT = _py.LINK_LOGIT

cum_link_terms = _impl.cum_link_terms
truncnorm_unit = _impl.truncnorm_unit
classify_smallest_k = _impl.classify_smallest_k
bern_loglik_sums = _impl.bern_loglik_sums
bern_score_info = _impl.bern_score_info
