"""Reference-based video super-resolution: python surface over the C++ core."""

import json

try:
    from hstrnet import _core
except ImportError:  # running against a build tree instead of an installed wheel
    import _core

Error = _core.Error
Model = _core.Model

degrade = _core.degrade
bicubic_resize = _core.bicubic_resize
warp = _core.warp
psnr = _core.psnr
ssim = _core.ssim
render_toy_frame = _core.render_toy_frame
make_toy_corpus = _core.make_toy_corpus
selftest = _core.selftest


def model_config(model):
    """The model's architecture settings as a dict."""
    return json.loads(model.config_json())


__all__ = [
    "Error",
    "Model",
    "degrade",
    "bicubic_resize",
    "warp",
    "psnr",
    "ssim",
    "render_toy_frame",
    "make_toy_corpus",
    "selftest",
    "model_config",
]
