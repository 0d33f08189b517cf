"""Hot loops behind a switchable backend.

``edge_forward``/``edge_backward`` run one attention-weighted reflection
aggregation layer over the CSR edge lists; ``l1_topk`` is the Manhattan
nearest-neighbour scan used for negative sampling; ``triplet_hinge``
evaluates the margin loss and its gradient.
"""

from importlib import import_module

from .._backend import apply_thread_cap, requested_backend

NAMES = ("edge_forward", "edge_backward", "l1_topk", "triplet_hinge")


def get_backend(name: str):
    """Return the kernel module for ``name`` (``"numba"`` or ``"numpy"``)."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    return import_module(f"._{name}", __name__)


BACKEND = requested_backend()
_impl = get_backend(BACKEND)
if BACKEND == "numba":
    apply_thread_cap()

edge_forward = _impl.edge_forward
edge_backward = _impl.edge_backward
l1_topk = _impl.l1_topk
triplet_hinge = _impl.triplet_hinge
