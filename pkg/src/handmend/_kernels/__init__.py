"""Hot per-pixel kernels, with a compiled fast path.

The Cython extension is used when importable; otherwise the NumPy twin in
``pure`` takes over. Set HANDMEND_KERNELS=native or =python to force one
side (native raises ImportError if the extension was never built).
"""

import os

from . import pure as _pure

_requested = os.environ.get("HANDMEND_KERNELS", "auto").lower()
if _requested not in ("auto", "native", "python"):
    raise ValueError(f"HANDMEND_KERNELS must be auto, native, or python, not {_requested!r}")

_impl = None
if _requested in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "native":
            raise
if _impl is None:
    _impl = _pure

BACKEND = "python" if _impl is _pure else "native"

warp_bilinear_u16 = _impl.warp_bilinear_u16
ssim_map = _impl.ssim_map
