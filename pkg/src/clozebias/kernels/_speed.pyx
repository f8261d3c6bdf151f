# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""C kernel backend: embedding text parsing and exact dot products.

Behavioral twin of clozebias.kernels.pure -- same accepted inputs, same
errors (kind + line number), bit-identical numeric results. The parser
walks the raw byte buffer with strtod; dot() ports CPython's fsum
(Shewchuk exact summation), so the result is the correctly rounded sum of
the elementwise products, independent of accumulation order.
"""

from libc.stdlib cimport strtod
from libc.math cimport fabs

import numpy as np

from clozebias.errors import LineParseError

cdef extern from "math.h":
    bint isfinite(double x) nogil
    bint isnan(double x) nogil

cdef enum:
    MAX_PARTIALS = 2100  # non-overlapping doubles; true bound is far lower

cdef char SP = 32, TAB = 9, NL = 10, CR = 13, VT = 11, FF = 12

# chars permitted in a value token; must match pure._FLOAT_CHARS
cdef bint[256] _FLOAT_OK


cdef void _init_float_table():
    cdef bytes allowed = b"0123456789+-.eE"
    cdef const char* s = allowed
    cdef Py_ssize_t i
    for i in range(256):
        _FLOAT_OK[i] = 0
    for i in range(len(allowed)):
        _FLOAT_OK[<unsigned char> s[i]] = 1


_init_float_table()


cdef inline bint _is_delim(char c) nogil:
    return c == SP or c == TAB


cdef inline bint _is_blank_char(char c) nogil:
    return c == SP or c == TAB or c == CR or c == VT or c == FF


def parse_vectors(bytes data, Py_ssize_t dim, Py_ssize_t first_lineno):
    """C twin of clozebias.kernels.pure.parse_vectors."""
    cdef const char* buf = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t max_rows = 1, k
    for k in range(n):
        if buf[k] == NL:
            max_rows += 1

    mat = np.empty((max_rows, dim), dtype=np.float64)
    cdef double[:, ::1] out = mat
    words = []

    cdef Py_ssize_t pos = 0, lineno = first_lineno - 1, row = 0
    cdef Py_ssize_t ls, le, p, ws, we, tstart, tend, nvalues, j
    cdef char* endptr
    cdef double val
    cdef bint blank

    while pos < n:
        ls = pos
        le = ls
        while le < n and buf[le] != NL:
            le += 1
        pos = le + 1
        while le > ls and buf[le - 1] == CR:
            le -= 1
        lineno += 1

        blank = True
        for p in range(ls, le):
            if not _is_blank_char(buf[p]):
                blank = False
                break
        if blank:
            continue

        # first token is the word
        p = ls
        while p < le and _is_delim(buf[p]):
            p += 1
        ws = p
        while p < le and not _is_delim(buf[p]):
            p += 1
        we = p

        # count the value tokens before parsing any (error precedence
        # matches the pure backend: dimension first, then float syntax)
        nvalues = 0
        while p < le:
            while p < le and _is_delim(buf[p]):
                p += 1
            if p >= le:
                break
            nvalues += 1
            while p < le and not _is_delim(buf[p]):
                p += 1
        if nvalues != dim:
            raise LineParseError(
                lineno, "dimension", f"expected {dim} values, found {nvalues}"
            )

        try:
            word = data[ws:we].decode("utf-8")
        except UnicodeDecodeError:
            raise LineParseError(lineno, "encoding", "invalid UTF-8 in word") from None

        p = we
        for j in range(dim):
            while p < le and _is_delim(buf[p]):
                p += 1
            tstart = p
            while p < le and not _is_delim(buf[p]):
                p += 1
            tend = p
            for k in range(tstart, tend):
                if not _FLOAT_OK[<unsigned char> buf[k]]:
                    raise LineParseError(
                        lineno, "float", data[tstart:tend].decode("utf-8", "replace")
                    )
            # token chars cannot continue past tend (delimiter/newline/NUL
            # follows), so strtod stays inside the token
            val = strtod(buf + tstart, &endptr)
            if endptr != buf + tend:
                raise LineParseError(lineno, "float", data[tstart:tend].decode("ascii"))
            if not isfinite(val):
                raise LineParseError(lineno, "float", "non-finite value")
            out[row, j] = val

        words.append(word)
        row += 1

    if row == 0:
        return words, np.empty((0, dim), dtype=np.float64)
    return words, np.asarray(mat[:row]).copy()


def dot(const double[::1] u, const double[::1] v):
    """Exact dot product; bit-identical to math.fsum of the products."""
    cdef Py_ssize_t n = u.shape[0]
    if v.shape[0] != n:
        raise ValueError("vector length mismatch")

    cdef double partials[MAX_PARTIALS]
    cdef Py_ssize_t cnt = 0, i, j, k
    cdef double x, y, t, hi, yr, lo = 0.0, xsave
    cdef double special_sum = 0.0, inf_sum = 0.0

    for k in range(n):
        x = u[k] * v[k]
        xsave = x
        i = 0
        for j in range(cnt):
            y = partials[j]
            if fabs(x) < fabs(y):
                t = x
                x = y
                y = t
            hi = x + y
            yr = hi - x
            lo = y - yr
            if lo != 0.0:
                partials[i] = lo
                i += 1
            x = hi
        cnt = i
        if x != 0.0:
            if not isfinite(x):
                # mirror math.fsum: finite inputs overflowing is an error,
                # inf/nan inputs propagate
                if isfinite(xsave):
                    raise OverflowError("intermediate overflow in fsum")
                if not isnan(xsave):
                    inf_sum += xsave
                special_sum += xsave
                cnt = 0
            else:
                if cnt >= MAX_PARTIALS:
                    raise OverflowError("partials overflow in fsum")
                partials[cnt] = x
                cnt += 1

    if special_sum != 0.0:
        if isnan(inf_sum):
            raise ValueError("-inf + inf in fsum")
        return special_sum

    hi = 0.0
    if cnt > 0:
        cnt -= 1
        hi = partials[cnt]
        # round correctly using the next-lower partials (CPython fsum tail)
        lo = 0.0
        while cnt > 0:
            x = hi
            cnt -= 1
            y = partials[cnt]
            hi = x + y
            yr = hi - x
            lo = y - yr
            if lo != 0.0:
                break
        if cnt > 0 and ((lo < 0.0 and partials[cnt - 1] < 0.0) or
                        (lo > 0.0 and partials[cnt - 1] > 0.0)):
            y = lo * 2.0
            x = hi + y
            yr = x - hi
            if y == yr:
                hi = x
    return hi
