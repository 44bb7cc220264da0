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

"""Deterministic thread-pool evaluation over grid cells."""

import concurrent.futures
from typing import Callable, Dict, Generic, Hashable, List, Sequence, Tuple, TypeVar

from ._logger import logger

DEFAULT_THREADS = 1

CellT = TypeVar("CellT", bound=Hashable)
ResultT = TypeVar("ResultT")


class _GridEvaluator(Generic[CellT, ResultT]):
    """Evaluate a pure function over grid cells with a thread pool.

    Results are keyed by cell and returned in sorted cell order, so the output never depends on
    the order in which the workers complete.
    """

    def __init__(self, function: Callable[[CellT], ResultT], max_workers: int = DEFAULT_THREADS):
        if max_workers < 1:
            raise ValueError(f"max_workers must be positive, got {max_workers}.")
        self._function = function
        self._max_workers = max_workers

    def evaluate(self, cells: Sequence[CellT]) -> List[Tuple[CellT, ResultT]]:
        """Evaluate every cell.

        Parameters
        ----------
        cells
            The cells to evaluate. Duplicates are evaluated once.

        Returns
        -------
        results
            ``(cell, result)`` pairs sorted by cell.
        """
        unique = sorted(set(cells))
        logger.debug(f"Evaluating {len(unique)} grid cell(s) with {self._max_workers} worker(s)")
        if self._max_workers == 1:
            return [(cell, self._function(cell)) for cell in unique]
        results: Dict[CellT, ResultT] = {}
        with concurrent.futures.ThreadPoolExecutor(max_workers=self._max_workers) as executor:
            futures = {executor.submit(self._function, cell): cell for cell in unique}
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
        return [(cell, results[cell]) for cell in unique]
