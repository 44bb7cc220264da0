# Copyright (C) 2023 - 2025 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""Package logger. The library only emits records, the ``parametrix`` command shows them."""

import logging
import sys
from typing import Optional, TextIO

logger = logging.getLogger("ansys.math.parametrix")
logger.addHandler(logging.NullHandler())

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
_VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO}

_console_handler: Optional[logging.Handler] = None


def configure_console_logging(verbosity: int, stream: Optional[TextIO] = None) -> logging.Handler:
    """
    Send the package records to a stream, replacing any handler set by a previous call.

    Parameters
    ----------
    verbosity : int
        ``0`` shows warnings, ``1`` information messages and ``2`` or more debug messages.
    stream : file-like, optional
        Destination of the records. Defaults to standard error.

    Returns
    -------
    logging.Handler
        The installed handler.
    """
    global _console_handler
    if _console_handler is not None:
        logger.removeHandler(_console_handler)
    level = _VERBOSITY_LEVELS.get(verbosity, logging.DEBUG)
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(level)
    logger.addHandler(handler)
    logger.setLevel(level)
    _console_handler = handler
    return handler
