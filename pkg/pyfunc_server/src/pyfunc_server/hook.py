"""Attachment point for a real evaluation pipeline.

The server can expose any callable that maps a semantic parameter vector u
to the scalar probability a downstream model assigns to the scene rendered
at u. Attach one by replacing ``predict`` (and, if exact gradients are
available, ``predict_grad``) before starting the server, then run it with
``--kind hook``:

    import pyfunc_server.hook

    pyfunc_server.hook.predict = my_pipeline
    pyfunc_server.server.entrypoint()

or edit this module in a fork. Nothing else in the server needs to change;
the wire protocol, request validation, and error handling stay the same.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence


def predict(u: Sequence[float]) -> float:
    """Return the model's confidence at u as a float in (0, 1).

    The default body only documents the contract: u is a sequence of n
    floats inside the domain declared on the command line, and the return
    value is a probability. Raising here turns into an id-matched error
    response, so an unconfigured hook server stays up and reports itself.
    """
    raise NotImplementedError(
        "no model attached; replace pyfunc_server.hook.predict"
    )


predict_grad: Optional[Callable[[Sequence[float]], Sequence[float]]] = None
"""Optional exact gradient of ``predict``; leave None to advertise grad: false."""
