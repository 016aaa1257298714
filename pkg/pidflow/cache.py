# == cache.py ==#

from __future__ import annotations

import logging
import threading
from collections import deque
from typing import Any, Callable, Deque, Dict, Optional, Tuple, TypeVar

from .dynamics import DynamicsVariant, PrecomputedOperators, VariantLike

__all__: Tuple[str, ...] = ('OperatorCache', 'operator_key')

logger = logging.getLogger(__name__)

K = TypeVar('K')
V = TypeVar('V')

OperatorKey = Tuple[str, Optional[float]]


class _BaseCache(Dict[K, V]):
    """A small LRU cache built from a deque of keys and a dict."""

    __slots__: Tuple[str, ...] = ('_max_size', '_lru_keys')

    def __init__(self, max_size: int, *args: Any) -> None:
        self._max_size: int = max(min(max_size, 32), 1)  # bounded, each entry holds an N x N factor
        self._lru_keys: Deque[K] = deque()
        super().__init__(*args)
        for key in self.keys():
            self._lru_keys.appendleft(key)

    def __getitem__(self, __k: K) -> V:
        value = super().__getitem__(__k)
        self._lru_keys.remove(__k)
        self._lru_keys.appendleft(__k)
        return value

    def __setitem__(self, __k: K, __v: V) -> None:
        if __k in self:
            self._lru_keys.remove(__k)
        elif len(self) >= self._max_size:
            super().__delitem__(self._lru_keys.pop())

        self._lru_keys.appendleft(__k)
        super().__setitem__(__k, __v)

    def __delitem__(self, __k: K) -> None:
        super().__delitem__(__k)
        self._lru_keys.remove(__k)

    @property
    def max_size(self) -> int:
        return self._max_size


def operator_key(variant: VariantLike, c3: float) -> OperatorKey:
    """Returns the cache key of the operators a run needs.

    Only the first-order variant factorizes ``I + c3·L``, so every other variant
    shares one entry regardless of its gains.
    """
    variant = DynamicsVariant(variant)
    if variant is DynamicsVariant.FIRST_ORDER_PID:
        return (variant.value, float(c3))
    return ('second_order', None)


class OperatorCache(_BaseCache[OperatorKey, PrecomputedOperators]):
    """LRU cache of :class:`PrecomputedOperators` for one graph and objective set.

    Runs that share a derivative gain reuse a single Cholesky factorization.
    Lookups are guarded by a lock so concurrent runs may share one cache.
    """

    __slots__: Tuple[str, ...] = ('_lock', 'hits', 'misses')

    def __init__(self, max_size: int = 8) -> None:
        super().__init__(max_size)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__} entries: {len(self)}, max_size: {self._max_size}>'

    def get_or_build(self, key: OperatorKey, factory: Callable[[], PrecomputedOperators]) -> PrecomputedOperators:
        with self._lock:
            if key in self:
                self.hits += 1
                return self[key]
            self.misses += 1
            logger.debug('Building operators for %s', key)
            ops = factory()
            self[key] = ops
            return ops
