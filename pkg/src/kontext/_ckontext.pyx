# cython: language_level=3
"""Compiled lookup engine: a thin wrapper over the shared C core.

Semantics mirror kontext.context exactly; the equivalence tests drive both
implementations over generated inputs. Raised exception types match the
pure engine so callers never need to know which backend answered.
"""

from kontext.errors import (
    CycleDetectedError,
    DepthExceededError,
    KontextError,
    SpecParseError,
    TemplateError,
)
from kontext.specfile import ParseErrorKind

cdef extern from "core.h":
    ctypedef struct kx_error:
        int line
        int kind
        char message[160]

    ctypedef struct kx_key:
        char *name
        char *value
        char **props
        char **propvals
        size_t nprops

    ctypedef struct kx_keyset:
        kx_key *items
        size_t len

    ctypedef struct kx_state:
        long long generation

    ctypedef struct kx_result:
        const char *value
        const char *matched
        char **chain
        size_t chain_len

    enum:
        KX_OK
        KX_ABSENT
        KX_E_NOMEM
        KX_E_PARSE
        KX_E_NAME
        KX_E_TEMPLATE
        KX_E_CYCLE
        KX_E_DEPTH
        KX_E_STATE
        KX_MAX_CHAIN

    void kx_keyset_init(kx_keyset *ks)
    void kx_keyset_free(kx_keyset *ks)
    const kx_key *kx_keyset_get(const kx_keyset *ks, const char *name)
    int kx_name_valid(const char *name)
    int kx_parse_spec(const char *data, size_t len, kx_keyset *out, kx_error *err)
    void kx_state_init(kx_state *st)
    void kx_state_free(kx_state *st)
    int kx_state_set(kx_state *st, const char *name, const char *value)
    int kx_candidates(const char *template_text, const kx_state *st,
                      char ***names_out, size_t *count_out, kx_error *err)
    void kx_names_free(char **names, size_t count)
    int kx_lookup(const kx_keyset *ks, const char *name, const kx_state *st,
                  kx_result *out, kx_error *err)
    void kx_result_free(kx_result *res)


_PARSE_KINDS = {
    1: ParseErrorKind.BAD_SECTION,
    2: ParseErrorKind.BAD_ASSIGNMENT,
    3: ParseErrorKind.PROPERTY_OUTSIDE_SECTION,
    4: ParseErrorKind.INVALID_NAME,
    5: ParseErrorKind.ENCODING,
}


cdef bytes _as_bytes(text):
    if isinstance(text, str):
        return text.encode("utf-8", "surrogatepass")
    return bytes(text)


cdef int _fill_state(kx_state *st, layers) except -1:
    for name, value in layers.items():
        if kx_state_set(st, _as_bytes(name), _as_bytes(value)) != KX_OK:
            raise MemoryError()
    return 0


cdef class Engine:
    """Spec loaded into the C core; lookups run entirely in C."""

    cdef kx_keyset ks
    cdef bint loaded

    def __cinit__(self):
        kx_keyset_init(&self.ks)
        self.loaded = False

    def __init__(self, spec_text):
        cdef kx_error err
        cdef bytes data = _as_bytes(spec_text)
        cdef int rc
        err.line = 0
        err.kind = 0
        err.message[0] = 0
        rc = kx_parse_spec(data, len(data), &self.ks, &err)
        if rc == KX_E_NOMEM:
            raise MemoryError()
        if rc != KX_OK:
            message = err.message.decode("utf-8", "replace")
            raise SpecParseError(err.line, _PARSE_KINDS.get(err.kind), message)
        self.loaded = True

    def __dealloc__(self):
        kx_keyset_free(&self.ks)

    def __len__(self):
        return self.ks.len

    def names(self):
        """All key display names in iteration order."""
        cdef size_t i
        out = []
        for i in range(self.ks.len):
            out.append(self.ks.items[i].name.decode("utf-8"))
        return out

    def get(self, name):
        """(value, meta dict) for an exact name, or None."""
        cdef const kx_key *key = kx_keyset_get(&self.ks, _as_bytes(name))
        cdef size_t i
        if key is NULL:
            return None
        meta = {}
        for i in range(key.nprops):
            meta[key.props[i].decode("utf-8")] = key.propvals[i].decode("utf-8")
        return (key.value.decode("utf-8"), meta)

    def contains(self, name):
        """Exact-name membership without building the value tuple."""
        return kx_keyset_get(&self.ks, _as_bytes(name)) is not NULL

    def lookup(self, name, layers):
        """(value, matched_name, chain) or None; raises like the pure engine."""
        cdef kx_state st
        cdef kx_result res
        cdef kx_error err
        cdef int rc
        cdef size_t i
        err.line = 0
        err.kind = 0
        err.message[0] = 0
        kx_state_init(&st)
        try:
            _fill_state(&st, layers)
            rc = kx_lookup(&self.ks, _as_bytes(name), &st, &res, &err)
            chain = [res.chain[i].decode("utf-8") for i in range(res.chain_len)]
            value = None
            matched = None
            if rc == KX_OK:
                value = res.value.decode("utf-8")
                matched = res.matched.decode("utf-8")
            kx_result_free(&res)
            if rc == KX_OK:
                return (value, matched, tuple(chain))
            if rc == KX_ABSENT:
                return None
            if rc == KX_E_CYCLE:
                raise CycleDetectedError(chain)
            if rc == KX_E_DEPTH:
                raise DepthExceededError(chain, KX_MAX_CHAIN)
            if rc == KX_E_TEMPLATE:
                raise TemplateError(err.message.decode("utf-8", "replace"))
            if rc == KX_E_NOMEM:
                raise MemoryError()
            raise KontextError(err.message.decode("utf-8", "replace"))
        finally:
            kx_state_free(&st)


def candidates(template_text, layers):
    """Candidate names for a template under the given layers, in order."""
    cdef kx_state st
    cdef kx_error err
    cdef char **names = NULL
    cdef size_t count = 0
    cdef size_t i
    cdef int rc
    err.line = 0
    err.kind = 0
    err.message[0] = 0
    kx_state_init(&st)
    try:
        _fill_state(&st, layers)
        rc = kx_candidates(_as_bytes(template_text), &st, &names, &count, &err)
        if rc == KX_E_NOMEM:
            raise MemoryError()
        if rc != KX_OK:
            raise TemplateError(err.message.decode("utf-8", "replace"))
        out = [names[i].decode("utf-8") for i in range(count)]
        kx_names_free(names, count)
        return out
    finally:
        kx_state_free(&st)


def name_valid(name):
    """True when the C core accepts this key name."""
    return kx_name_valid(_as_bytes(name)) != 0
