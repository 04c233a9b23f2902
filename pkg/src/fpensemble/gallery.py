""" Embedding galleries, exhaustive 1:N search and the embedding-store format.

A Gallery holds one column per ModelTag. Each column is a dense, contiguous
float32 matrix (one row per enrolled identity) plus the ids in enrollment
order. Searching a column is a blocked matrix-vector product followed by an
exact top-k selection; ties are broken by enrollment order.

Store files (.fpes) are little-endian:

    magic   4 bytes  b'FPES'
    version u16      1
    dim     u16
    count   u64      number of records
    records count x (tag u8, id_len u16, id utf-8, dim x f32)

Records are written column by column in tag order, each column in
enrollment order.
"""

import logging
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import ModelTag, EmbeddingVector, subject_id
from .exceptions import DimensionMismatch, DuplicateId, EmptyGallery
from .exceptions import MisalignedGallery, StoreFormatError, DataError
from .fusion import ScoreRule, fuse_score_matrix
from .util import flexopen, atomic_write

log = logging.getLogger(__name__)

STORE_MAGIC = b'FPES'
STORE_VERSION = 1
STORE_NORM_TOLERANCE = 1e-4
BLOCK_ROWS = 65536
MIN_GROWTH = 1024

_header = struct.Struct('<4sHHQ')
_record = struct.Struct('<BH')


@dataclass(frozen=True)
class SearchResult:
    """ A ranked candidate list, best first

    `total` is the number of entries that were searched, so a result knows
    whether it is a full ranking.
    """
    ranked: Sequence[Tuple[str, float]]
    k: int
    total: int

    @property
    def ids(self):
        return [sid for sid, _ in self.ranked]

    @property
    def scores(self):
        return [score for _, score in self.ranked]

    @property
    def complete(self):
        return len(self.ranked) == self.total

    def rank_of(self, sid):
        """ 1-based rank of `sid`, or None if it isn't in the list """
        for rank, (candidate, _) in enumerate(self.ranked, 1):
            if candidate == sid:
                return rank
        return None

    def __len__(self):
        return len(self.ranked)


def topk_indices(scores, k):
    """ Indices of the k highest scores, best first, ties by lower index """
    n = scores.size
    k = min(k, n)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= kth)
    else:
        candidates = np.arange(n)
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


class _Column:
    """ One tag's ids and embedding rows

    Rows live in a preallocated matrix that grows by about a tenth at a
    time; only the first `count` rows are meaningful.
    """
    def __init__(self, dim, capacity=0):
        self.ids = []
        self.index = {}
        self.rows = np.empty((capacity, dim), dtype=np.float32)

    @property
    def count(self):
        return len(self.ids)

    def reserve(self, extra):
        needed = self.count + extra
        capacity = self.rows.shape[0]
        if needed <= capacity:
            return
        capacity = max(needed, capacity + max(MIN_GROWTH, capacity // 10))
        grown = np.empty((capacity, self.rows.shape[1]), dtype=np.float32)
        grown[:self.count] = self.rows[:self.count]
        self.rows = grown

    def append(self, sid, values):
        self.reserve(1)
        self.rows[self.count] = values
        self.index[sid] = self.count
        self.ids.append(sid)

    def view(self):
        rows = self.rows[:self.count]
        rows = rows.view()
        rows.flags.writeable = False
        return tuple(self.ids), rows


class Gallery:
    """ Per-model, identity-indexed embedding store with exact top-k search

    Searches may run concurrently with each other. Enrollment takes a lock,
    and searches work on a snapshot taken under the same lock, so a search
    never sees a subject that is only partly enrolled.
    """
    def __init__(self, dim, threads=1):
        if dim < 1:
            raise DataError(f"gallery dim must be positive, got {dim}")
        self.dim = dim
        self.threads = threads
        self._columns = {}
        self._lock = threading.Lock()

    def __repr__(self):
        counts = ', '.join(f'{t}={c.count}' for t, c in self._items())
        return f"Gallery(dim={self.dim}, {counts})"

    def _items(self):
        return sorted(self._columns.items())

    @property
    def tags(self):
        return [tag for tag, _ in self._items()]

    def count(self, tag=None):
        """ Entries in one column, or in all columns together """
        if tag is not None:
            column = self._columns.get(ModelTag.parse(tag))
            return column.count if column else 0
        return sum(c.count for c in self._columns.values())

    def __len__(self):
        return self.count()

    def __contains__(self, sid):
        return any(sid in c.index for c in self._columns.values())

    def ids(self, tag):
        ids, _ = self._snapshot([tag])[ModelTag.parse(tag)]
        return list(ids)

    def matrix(self, tag):
        """ Read-only (count, dim) view of one column """
        _, rows = self._snapshot([tag])[ModelTag.parse(tag)]
        return rows

    def embedding(self, tag, sid):
        tag = ModelTag.parse(tag)
        column = self._columns[tag]
        return EmbeddingVector(column.rows[column.index[sid]])

    def nbytes(self, tag):
        """ Bytes of embedding data held for one column """
        return self.count(tag) * self.dim * 4

    def _check_dim(self, values, what):
        if values.shape != (self.dim,):
            raise DimensionMismatch(f"{what} is {values.size}-d, gallery "
                                    f"is {self.dim}-d")

    def enroll(self, sid, embeddings):
        """ Add one identity to every column it has an embedding for

        Returns the gallery, for chaining.
        """
        sid = subject_id(sid)
        staged = {}
        for tag, emb in embeddings.items():
            tag = ModelTag.parse(tag)
            values = emb.values if isinstance(emb, EmbeddingVector) else \
                EmbeddingVector(emb).values
            self._check_dim(values, f"embedding {sid}/{tag}")
            staged[tag] = values
        if not staged:
            raise DataError(f"no embeddings given for {sid}")
        with self._lock:
            if sid in self:
                raise DuplicateId(f"{sid} is already enrolled")
            for tag, values in sorted(staged.items()):
                column = self._columns.setdefault(tag, _Column(self.dim))
                column.append(sid, values)
        return self

    def _append(self, tag, sid, values):
        """ Add one row to one column (store loading; no cross-tag check) """
        column = self._columns.setdefault(tag, _Column(self.dim))
        if sid in column.index:
            raise DuplicateId(f"{sid} appears twice in column {tag}")
        column.append(sid, values)

    @classmethod
    def from_matrices(cls, ids, matrices, threads=1):
        """ Build a gallery from aligned per-tag (n, dim) matrices

        Row i of every matrix belongs to ids[i]. Rows are stored as given,
        so a saved gallery reproduces its input bit for bit.
        """
        ids = [subject_id(i) for i in ids]
        matrices = {ModelTag.parse(t): np.asarray(m, dtype=np.float32)
                    for t, m in matrices.items()}
        if not matrices:
            raise DataError("no embedding matrices given")
        dims = {m.shape[1] for m in matrices.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"matrices disagree on dim: {sorted(dims)}")
        gallery = cls(dims.pop(), threads)
        for tag, rows in sorted(matrices.items()):
            if rows.shape[0] != len(ids):
                raise DataError(f"{tag} has {rows.shape[0]} rows for "
                                f"{len(ids)} ids")
            gallery._columns[tag] = _Column(gallery.dim, len(ids))
            for sid, row in zip(ids, rows):
                gallery._append(tag, sid, row)
        return gallery

    def _snapshot(self, tags):
        out = {}
        with self._lock:
            for tag in tags:
                tag = ModelTag.parse(tag)
                column = self._columns.get(tag)
                if column is None or column.count == 0:
                    raise EmptyGallery(f"gallery has no {tag} entries")
                out[tag] = column.view()
        return out

    def _probe_values(self, probe):
        values = probe.values if isinstance(probe, EmbeddingVector) \
            else np.asarray(probe, dtype=np.float32)
        self._check_dim(values, "probe")
        return values

    def _blocks(self, n):
        return [(start, min(start + BLOCK_ROWS, n))
                for start in range(0, n, BLOCK_ROWS)]

    def _map_blocks(self, func, n, threads):
        blocks = self._blocks(n)
        threads = threads or self.threads or 1
        if threads == 1 or len(blocks) == 1:
            return [func(*block) for block in blocks]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: func(*b), blocks))

    def scores(self, tag, probe, threads=None, _snap=None):
        """ Similarity of `probe` to every entry of a column, float32 """
        values = self._probe_values(probe)
        _, rows = _snap or self._snapshot([tag])[ModelTag.parse(tag)]
        out = np.empty(rows.shape[0], dtype=np.float32)

        def fill(start, stop):
            np.matmul(rows[start:stop], values, out=out[start:stop])

        self._map_blocks(fill, rows.shape[0], threads)
        return np.clip(out, -1.0, 1.0, out=out)

    def search_topk(self, tag, probe, k, threads=None):
        """ Exact top-k search of one column by cosine similarity """
        if k < 1:
            raise DataError(f"k must be positive, got {k}")
        tag = ModelTag.parse(tag)
        values = self._probe_values(probe)
        ids, rows = self._snapshot([tag])[tag]

        def block_topk(start, stop):
            block = np.clip(rows[start:stop] @ values, -1.0, 1.0)
            local = topk_indices(block, k)
            return local + start, block[local]

        parts = self._map_blocks(block_topk, rows.shape[0], threads)
        index = np.concatenate([p[0] for p in parts])
        scores = np.concatenate([p[1] for p in parts])
        best = topk_indices(scores, k)
        ranked = [(ids[i], float(s))
                  for i, s in zip(index[best], scores[best])]
        return SearchResult(ranked, k, rows.shape[0])

    def ensemble_rank1_or(self, probes, true_id, threads=None):
        """ True if any model's rank-1 candidate is `true_id` """
        if not probes:
            raise DataError("no probe embeddings given")
        return any(self.search_topk(tag, probe, 1, threads).ids[0] == true_id
                   for tag, probe in sorted(probes.items()))

    def _aligned(self, probes):
        snaps = self._snapshot(probes.keys())
        tags = sorted(snaps)
        first = snaps[tags[0]]
        for tag in tags[1:]:
            ids, _ = snaps[tag]
            if len(ids) != len(first[0]) or ids != first[0]:
                raise MisalignedGallery(f"columns {tags[0]} and {tag} hold "
                                        "different id sequences")
        return snaps, tags

    def fused_scores(self, probes, rule=ScoreRule.Median, threads=None):
        """ Score-fused similarity of a probe set to every identity

        Returns the (ids, float64 scores) of the aligned columns.
        """
        if not probes:
            raise DataError("no probe embeddings given")
        snaps, tags = self._aligned(probes)
        matrix = np.stack([self.scores(tag, probes[tag], threads, snaps[tag])
                           for tag in tags])
        return snaps[tags[0]][0], fuse_score_matrix(matrix, rule)

    def ensemble_search_scorefuse(self, probes, rule=ScoreRule.Median, k=1,
                                  threads=None):
        """ Rank identities by the fused score of same-model comparisons """
        if k < 1:
            raise DataError(f"k must be positive, got {k}")
        ids, fused = self.fused_scores(probes, rule, threads)
        best = topk_indices(fused, k)
        return SearchResult([(ids[i], float(fused[i])) for i in best], k,
                            fused.size)

    #
    # Store format
    #

    def to_bytes(self):
        snaps = self._snapshot(self.tags) if self._columns else {}
        chunks = [_header.pack(STORE_MAGIC, STORE_VERSION, self.dim,
                               sum(len(ids) for ids, _ in snaps.values()))]
        for tag, (ids, rows) in sorted(snaps.items()):
            data = np.ascontiguousarray(rows, dtype='<f4')
            for i, sid in enumerate(ids):
                raw = sid.encode('utf-8')
                chunks.append(_record.pack(int(tag), len(raw)))
                chunks.append(raw)
                chunks.append(data[i].tobytes())
        return b''.join(chunks)

    @classmethod
    def from_bytes(cls, data, source=None, threads=1):
        view = memoryview(data)
        if len(view) < _header.size:
            raise StoreFormatError("truncated header", source)
        magic, version, dim, count = _header.unpack_from(view, 0)
        if magic != STORE_MAGIC:
            raise StoreFormatError(f"bad magic {bytes(magic)!r}", source)
        if version != STORE_VERSION:
            raise StoreFormatError(f"unsupported version {version}", source)
        if dim < 1:
            raise StoreFormatError("dim must be positive", source)
        pos, vecbytes = _header.size, dim * 4
        records = []
        for n in range(count):
            if pos + _record.size > len(view):
                raise StoreFormatError(f"truncated at record {n}", source)
            tag, idlen = _record.unpack_from(view, pos)
            pos += _record.size
            if pos + idlen + vecbytes > len(view):
                raise StoreFormatError(f"truncated at record {n}", source)
            try:
                tag = ModelTag(tag)
                sid = subject_id(bytes(view[pos:pos + idlen]).decode('utf-8'))
            except (ValueError, UnicodeDecodeError) as ex:
                raise StoreFormatError(f"record {n}: {ex}", source) from ex
            pos += idlen
            records.append((tag, sid, pos))
            pos += vecbytes
        if pos != len(view):
            raise StoreFormatError(f"{len(view) - pos} trailing bytes", source)

        gallery = cls(dim, threads)
        counts = {}
        for tag, _, _ in records:
            counts[tag] = counts.get(tag, 0) + 1
        for tag, n in counts.items():
            gallery._columns[tag] = _Column(dim, n)
        for n, (tag, sid, offset) in enumerate(records):
            values = np.frombuffer(view, dtype='<f4', count=dim, offset=offset)
            if not np.all(np.isfinite(values)):
                raise StoreFormatError(f"record {n} ({sid}) has non-finite "
                                       "values", source)
            norm = np.linalg.norm(values.astype(np.float64))
            if abs(norm - 1.0) > STORE_NORM_TOLERANCE:
                raise StoreFormatError(f"record {n} ({sid}) has norm {norm}",
                                       source)
            try:
                gallery._append(tag, sid, values)
            except DuplicateId as ex:
                raise StoreFormatError(str(ex), source) from ex
        log.debug("loaded %s records (%s-d) from %s", count, dim,
                  source or 'bytes')
        return gallery

    def save(self, path):
        """ Write the gallery as an embedding store """
        atomic_write(path, self.to_bytes())
        log.info("saved %s embeddings to %s", len(self), path)

    @classmethod
    def load(cls, path, threads=1):
        with flexopen(path, 'rb') as f:
            return cls.from_bytes(f.read(), getattr(f, 'name', str(path)),
                                  threads)
