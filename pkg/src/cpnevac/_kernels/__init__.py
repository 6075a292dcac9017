"""Kernel backend selection: compiled extension when available, else the
pure-Python twin. ``CPNEVAC_KERNEL=c|py|auto`` overrides (``c`` raises if
the extension is missing). Both backends produce bit-identical results.
"""
from __future__ import annotations

import os

_choice = os.environ.get("CPNEVAC_KERNEL", "auto").lower()

if _choice not in ("auto", "c", "py"):
    raise RuntimeError(f"CPNEVAC_KERNEL must be auto, c or py, not {_choice!r}")

if _choice in ("auto", "c"):
    try:
        from . import _cpn_c as _impl

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
        from . import cpn_py as _impl

        BACKEND = "python"
else:
    from . import cpn_py as _impl

    BACKEND = "python"

pcg_seed = _impl.pcg_seed
pcg_next = _impl.pcg_next
pcg_uniform = _impl.pcg_uniform
pcg_bounded = _impl.pcg_bounded
solve_node = _impl.solve_node
reinforce_node = _impl.reinforce_node
walk = _impl.walk
process_ack = _impl.process_ack


def backend_name() -> str:
    """Identifier of the active kernel backend ('c' or 'python')."""
    return BACKEND
