"""Counting allocator for numpy array data buffers.

numpy (>= 1.22) routes every data-buffer allocation through a replaceable
``PyDataMem_Handler``.  ``count_allocations`` installs a handler that forwards
to numpy's default allocator and counts malloc/calloc/realloc calls, so a test
can assert that a block of code creates no array temporaries.  Python object
allocations (floats, view objects) are not counted; only array payloads are.

The handler is installed through numpy's C-API table with ctypes.  Nothing here
is imported by the engine itself.
"""

import contextlib
import ctypes

import numpy as np

try:
    from numpy._core import _multiarray_umath as _mu
except ImportError:  # numpy < 2
    from numpy.core import _multiarray_umath as _mu

# Slots in the numpy C-API table (stable since 1.22).
_SET_HANDLER = 304
_DEFAULT_HANDLER = 306

_MALLOC = ctypes.CFUNCTYPE(ctypes.c_void_p, ctypes.c_void_p, ctypes.c_size_t)
_CALLOC = ctypes.CFUNCTYPE(ctypes.c_void_p, ctypes.c_void_p, ctypes.c_size_t, ctypes.c_size_t)
_REALLOC = ctypes.CFUNCTYPE(ctypes.c_void_p, ctypes.c_void_p, ctypes.c_void_p, ctypes.c_size_t)


class _Allocator(ctypes.Structure):
    _fields_ = [
        ("ctx", ctypes.c_void_p),
        ("malloc", ctypes.c_void_p),
        ("calloc", ctypes.c_void_p),
        ("realloc", ctypes.c_void_p),
        ("free", ctypes.c_void_p),
    ]


class _Handler(ctypes.Structure):
    _fields_ = [
        ("name", ctypes.c_char * 127),
        ("version", ctypes.c_uint8),
        ("allocator", _Allocator),
    ]


class AllocationCounter:
    """Tally of array data allocations observed while the handler was active."""

    def __init__(self):
        self.count = 0
        self.nbytes = 0

    def __repr__(self):
        return f"AllocationCounter(count={self.count}, nbytes={self.nbytes})"


_state = {"installed": None, "active": None}


def _install():
    if _state["installed"] is not None:
        return _state["installed"]

    api = ctypes.pythonapi
    api.PyCapsule_GetPointer.restype = ctypes.c_void_p
    api.PyCapsule_GetPointer.argtypes = [ctypes.py_object, ctypes.c_char_p]
    api.PyCapsule_New.restype = ctypes.py_object
    api.PyCapsule_New.argtypes = [ctypes.c_void_p, ctypes.c_char_p, ctypes.c_void_p]

    table_addr = api.PyCapsule_GetPointer(_mu._ARRAY_API, None)
    table = ctypes.cast(table_addr, ctypes.POINTER(ctypes.c_void_p))
    set_handler = ctypes.PYFUNCTYPE(ctypes.py_object, ctypes.py_object)(table[_SET_HANDLER])

    # PyDataMem_DefaultHandler is a PyObject* stored in the table slot.
    default_capsule = ctypes.cast(table[_DEFAULT_HANDLER], ctypes.POINTER(ctypes.py_object))[0]
    default = _Handler.from_address(api.PyCapsule_GetPointer(default_capsule, b"mem_handler"))
    dctx = default.allocator.ctx
    dmalloc = _MALLOC(default.allocator.malloc)
    dcalloc = _CALLOC(default.allocator.calloc)
    drealloc = _REALLOC(default.allocator.realloc)

    def _tally(nbytes):
        counter = _state["active"]
        if counter is not None:
            counter.count += 1
            counter.nbytes += nbytes

    def _malloc(ctx, size):
        _tally(size)
        return dmalloc(dctx, size)

    def _calloc(ctx, nelem, elsize):
        _tally(nelem * elsize)
        return dcalloc(dctx, nelem, elsize)

    def _realloc(ctx, ptr, size):
        _tally(size)
        return drealloc(dctx, ptr, size)

    thunks = (_MALLOC(_malloc), _CALLOC(_calloc), _REALLOC(_realloc))

    # The handler struct must outlive every array allocated through it, which
    # includes arrays freed during interpreter shutdown.  It lives in raw C
    # memory that is never released; `free` is numpy's own C function.
    raw = ctypes.CDLL(None).malloc
    raw.restype = ctypes.c_void_p
    raw.argtypes = [ctypes.c_size_t]
    addr = raw(ctypes.sizeof(_Handler))
    handler = _Handler.from_address(addr)
    handler.name = b"exprad_counting_allocator"
    handler.version = 1
    handler.allocator.ctx = None
    handler.allocator.malloc = ctypes.cast(thunks[0], ctypes.c_void_p).value
    handler.allocator.calloc = ctypes.cast(thunks[1], ctypes.c_void_p).value
    handler.allocator.realloc = ctypes.cast(thunks[2], ctypes.c_void_p).value
    handler.allocator.free = default.allocator.free
    capsule = api.PyCapsule_New(addr, b"mem_handler", None)

    # Leak references so the thunks survive module teardown.
    for obj in (*thunks, capsule):
        api.Py_IncRef(ctypes.py_object(obj))

    _state["installed"] = (set_handler, capsule, thunks)
    return _state["installed"]


@contextlib.contextmanager
def count_allocations():
    """Count numpy data-buffer allocations made inside the ``with`` block.

    >>> a = np.ones(4)
    >>> with count_allocations() as c:
    ...     _ = np.multiply(a, a, out=a)
    >>> c.count
    0
    """
    set_handler, capsule, _ = _install()
    counter = AllocationCounter()
    previous = set_handler(capsule)
    _state["active"] = counter
    try:
        yield counter
    finally:
        _state["active"] = None
        set_handler(previous)

