"""Plasticity-loss toolkit. The heavy lifting lives in the compiled ``_core`` module."""

import json as _json

from . import _core
from ._core import *  # noqa: F401,F403


def run(config, out, seed=None):
    """Run an experiment from a dict or JSON text; returns the summary dict."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _json.loads(_core.run(text, str(out), seed))


def validate_config(config):
    """Return the fully resolved config, raising ValidationError on bad input."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _json.loads(_core.validate_config(text))


def methods():
    """The mitigation registry as a dict."""
    return _json.loads(_core.list_methods(True))
