"""Conversation datasets: domain types, on-disk format, synthetic generator.

On-disk format (see docs/dataset_format.md): UTF-8 JSON Lines. The first
line is a header {"kind": "trimodal-dataset", "version": 1, "dims":
{"s":…,"v":…,"t":…}, "classes": C[, "class_names": […]]}. Every following
line is one utterance with fields in this exact order: conv, speaker, idx,
label, s, v, t. Floats are written with Python's shortest round-trip repr,
so save -> load is bit-exact.

The generator builds conversations whose labels need multi-modal and
contextual fusion. In complementary mode the class index is encoded as a
codeword whose coordinates are split one-per-modality, so no single
modality identifies the class; with probability p_ctx an utterance copies
its predecessor's label and its own signal is attenuated, rewarding models
that use conversational context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

FORMAT_KIND = "trimodal-dataset"
FORMAT_VERSION = 1
MODALITY_FIELDS = ("s", "v", "t")


class DatasetFormatError(ValueError):
    """A dataset file violates the documented format."""

    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        where = f"line {line}" if line is not None else "file"
        what = f", field {field_name!r}" if field_name else ""
        super().__init__(f"{where}{what}: {message}")
        self.line = line
        self.field = field_name


@dataclass
class Utterance:
    """One spoken turn: three modality feature vectors plus a label."""

    s: np.ndarray
    v: np.ndarray
    t: np.ndarray
    label: int

    def __post_init__(self):
        for m in MODALITY_FIELDS:
            arr = np.ascontiguousarray(getattr(self, m), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"modality {m!r} must be a 1-D vector")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"modality {m!r} contains non-finite values")
            setattr(self, m, arr)
        self.label = int(self.label)


@dataclass
class Conversation:
    """An ordered sequence of utterances from one speaker."""

    id: str
    speaker: str
    utterances: list[Utterance]
    n_classes: int
    split: str | None = None  # "train" | "test" once assigned

    def __post_init__(self):
        if len(self.utterances) < 1:
            raise ValueError(f"conversation {self.id!r} is empty")
        dims = {m: getattr(self.utterances[0], m).shape[0] for m in MODALITY_FIELDS}
        for i, u in enumerate(self.utterances):
            for m in MODALITY_FIELDS:
                if getattr(u, m).shape[0] != dims[m]:
                    raise ValueError(
                        f"conversation {self.id!r} utterance {i}: modality {m!r} "
                        f"dim {getattr(u, m).shape[0]} != {dims[m]}")
            if not 0 <= u.label < self.n_classes:
                raise ValueError(
                    f"conversation {self.id!r} utterance {i}: label {u.label} "
                    f"outside [0, {self.n_classes})")
        self._matrices = None

    def __len__(self) -> int:
        return len(self.utterances)

    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=np.int64)

    def feature_matrices(self) -> dict[str, np.ndarray]:
        """Stacked (M, dim) float64 matrices per modality, cached."""
        if self._matrices is None:
            self._matrices = {m: np.stack([getattr(u, m) for u in self.utterances])
                              for m in MODALITY_FIELDS}
        return self._matrices

    def dims(self) -> dict[str, int]:
        u = self.utterances[0]
        return {m: getattr(u, m).shape[0] for m in MODALITY_FIELDS}


def n_utterances(conversations) -> int:
    return sum(len(c) for c in conversations)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def save_dataset(conversations: list[Conversation], path, class_names=None) -> None:
    """Write the documented JSON Lines format (canonical field order)."""
    if not conversations:
        raise ValueError("refusing to write an empty dataset")
    dims = conversations[0].dims()
    n_classes = conversations[0].n_classes
    header = {"kind": FORMAT_KIND, "version": FORMAT_VERSION,
              "dims": {m: dims[m] for m in MODALITY_FIELDS}, "classes": n_classes}
    if class_names is not None:
        if len(class_names) != n_classes:
            raise ValueError("class_names length must equal the class count")
        header["class_names"] = list(class_names)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for conv in conversations:
            if conv.n_classes != n_classes:
                raise ValueError(f"conversation {conv.id!r} has a different class count")
            for idx, u in enumerate(conv.utterances):
                rec = {"conv": conv.id, "speaker": conv.speaker, "idx": idx,
                       "label": u.label,
                       "s": u.s.tolist(), "v": u.v.tolist(), "t": u.t.tolist()}
                fh.write(json.dumps(rec) + "\n")


def _require(cond: bool, message: str, line: int, field_name: str | None = None) -> None:
    if not cond:
        raise DatasetFormatError(message, line, field_name)


def load_dataset(path) -> list[Conversation]:
    """Parse and validate a dataset file; errors carry line and field."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"header is not valid JSON: {e}", line=1) from e
    _require(isinstance(header, dict) and header.get("kind") == FORMAT_KIND,
             f"expected header kind {FORMAT_KIND!r}", 1, "kind")
    _require(header.get("version") == FORMAT_VERSION,
             f"unsupported version {header.get('version')!r}", 1, "version")
    dims = header.get("dims")
    _require(isinstance(dims, dict) and set(dims) == set(MODALITY_FIELDS)
             and all(isinstance(dims[m], int) and dims[m] >= 1 for m in MODALITY_FIELDS),
             "dims must map s, v, t to positive integers", 1, "dims")
    n_classes = header.get("classes")
    _require(isinstance(n_classes, int) and n_classes >= 2,
             "classes must be an integer >= 2", 1, "classes")
    class_names = header.get("class_names")
    if class_names is not None:
        _require(isinstance(class_names, list) and len(class_names) == n_classes,
                 "class_names must list one name per class", 1, "class_names")

    conversations: list[Conversation] = []
    seen_ids: set[str] = set()
    current_id = None
    current_speaker = None
    pending: list[Utterance] = []

    def close_current():
        nonlocal current_id, pending
        if current_id is not None:
            conversations.append(Conversation(current_id, current_speaker, pending,
                                              n_classes))
            pending = []
            current_id = None

    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            raise DatasetFormatError("blank line inside dataset", lineno)
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"invalid JSON: {e}", lineno) from e
        _require(isinstance(rec, dict), "record must be a JSON object", lineno)
        for f in ("conv", "speaker", "idx", "label", *MODALITY_FIELDS):
            _require(f in rec, "missing field", lineno, f)
        conv_id = rec["conv"]
        _require(isinstance(conv_id, str) and conv_id, "conversation id must be a "
                 "nonempty string", lineno, "conv")
        _require(isinstance(rec["speaker"], str) and rec["speaker"],
                 "speaker id must be a nonempty string", lineno, "speaker")

        if conv_id != current_id:
            close_current()
            _require(conv_id not in seen_ids, f"duplicate conversation id {conv_id!r}",
                     lineno, "conv")
            seen_ids.add(conv_id)
            current_id = conv_id
            current_speaker = rec["speaker"]
        _require(rec["speaker"] == current_speaker,
                 f"speaker changed within conversation {conv_id!r}", lineno, "speaker")
        _require(rec["idx"] == len(pending),
                 f"utterance index {rec['idx']} out of order (expected {len(pending)})",
                 lineno, "idx")
        label = rec["label"]
        _require(isinstance(label, int) and 0 <= label < n_classes,
                 f"label {label!r} outside [0, {n_classes}) in utterance "
                 f"{conv_id!r}[{rec['idx']}]", lineno, "label")
        vectors = {}
        for m in MODALITY_FIELDS:
            val = rec[m]
            _require(isinstance(val, list) and len(val) == dims[m],
                     f"expected {dims[m]} floats, got "
                     f"{len(val) if isinstance(val, list) else type(val).__name__}",
                     lineno, m)
            arr = np.asarray(val, dtype=np.float64)
            _require(bool(np.all(np.isfinite(arr))), "non-finite feature value",
                     lineno, m)
            vectors[m] = arr
        pending.append(Utterance(vectors["s"], vectors["v"], vectors["t"], label))

    close_current()
    if not conversations:
        raise DatasetFormatError("dataset contains a header but no utterances")
    return conversations


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

GENERATOR_MODES = ("redundant", "complementary", "xor")


@dataclass
class SyntheticSpec:
    """Controls for the synthetic conversation generator."""

    seed: int = 0
    n_classes: int = 4
    dim_speech: int = 128
    dim_visual: int = 96
    dim_text: int = 64
    n_conversations: int = 250
    n_speakers: int = 10
    min_len: int = 4
    max_len: int = 12
    snr: float | tuple = 3.0            # scalar or per-modality (s, v, t)
    p_ctx: float = 0.3                  # chance an utterance copies its predecessor's label
    attenuation: float = 0.25           # own-signal scale on copied utterances
    mode: str = "complementary"
    class_weights: list | None = None   # class-imbalance knob; None = uniform

    def __post_init__(self):
        if self.mode not in GENERATOR_MODES:
            raise ValueError(f"mode must be one of {GENERATOR_MODES}")
        if self.mode == "xor" and self.n_classes != 2:
            raise ValueError("xor mode is a 2-class construction")
        if not 0.0 <= self.p_ctx <= 1.0:
            raise ValueError("p_ctx must lie in [0, 1]")
        snrs = self.snr_per_modality()
        if any(x <= 0 for x in snrs):
            raise ValueError("snr must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.n_speakers < 1 or self.n_conversations < 1:
            raise ValueError("need at least one speaker and one conversation")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=np.float64)
            if w.shape != (self.n_classes,) or np.any(w <= 0):
                raise ValueError("class_weights must give a positive weight per class")

    def snr_per_modality(self) -> tuple[float, float, float]:
        if isinstance(self.snr, (int, float)):
            return (float(self.snr),) * 3
        s, v, t = self.snr
        return (float(s), float(v), float(t))


def coordinate_maps(spec: SyntheticSpec) -> tuple[int, dict[str, np.ndarray]]:
    """Per-modality class->group maps realizing the chosen coupling mode.

    complementary: groups g_s = c // k, g_v = c mod k, g_t = (g_s+g_v) mod k
    with k = ceil(sqrt(C)); any one coordinate leaves several classes
    possible, any two identify the class. redundant: every modality carries
    the class index itself. xor handles its bits separately.
    """
    c = spec.n_classes
    if spec.mode == "redundant":
        idx = np.arange(c)
        return c, {m: idx.copy() for m in MODALITY_FIELDS}
    k = int(np.ceil(np.sqrt(c)))
    g_s = np.arange(c) // k
    g_v = np.arange(c) % k
    g_t = (g_s + g_v) % k
    return k, {"s": g_s, "v": g_v, "t": g_t}


def _signal_directions(rng: np.random.Generator, n_groups: int, dim: int) -> np.ndarray:
    """(n_groups, dim) orthonormal signal directions."""
    if dim < n_groups:
        raise ValueError(f"feature dim {dim} too small for {n_groups} signal groups")
    q, _ = np.linalg.qr(rng.standard_normal((dim, n_groups)))
    return np.ascontiguousarray(q.T)


def generate_synthetic(spec: SyntheticSpec) -> list[Conversation]:
    """Deterministic synthetic conversations; same spec -> identical bits."""
    rng = np.random.default_rng(spec.seed)
    dims = {"s": spec.dim_speech, "v": spec.dim_visual, "t": spec.dim_text}
    snrs = dict(zip(MODALITY_FIELDS, spec.snr_per_modality()))
    weights = None
    if spec.class_weights is not None:
        w = np.asarray(spec.class_weights, dtype=np.float64)
        weights = w / w.sum()

    if spec.mode == "xor":
        bases = {m: _signal_directions(rng, 1, dims[m])[0] for m in MODALITY_FIELDS}
    else:
        n_groups, groups = coordinate_maps(spec)
        bases = {m: _signal_directions(rng, n_groups, dims[m]) for m in MODALITY_FIELDS}

    conversations = []
    for ci in range(spec.n_conversations):
        speaker = f"spk{ci % spec.n_speakers:03d}"
        m_len = int(rng.integers(spec.min_len, spec.max_len + 1))
        utterances = []
        prev_label = None
        for _ in range(m_len):
            copied = prev_label is not None and rng.random() < spec.p_ctx
            if copied:
                label = prev_label
            elif weights is None:
                label = int(rng.integers(spec.n_classes))
            else:
                label = int(rng.choice(spec.n_classes, p=weights))
            amp_scale = spec.attenuation if copied else 1.0

            feats = {}
            if spec.mode == "xor":
                # parity of two hidden sign bits, one per modality; text is noise
                b_s = int(rng.integers(2))
                b_v = b_s ^ label
                signs = {"s": 2 * b_s - 1, "v": 2 * b_v - 1, "t": 0.0}
                for m in MODALITY_FIELDS:
                    noise = rng.standard_normal(dims[m])
                    feats[m] = noise + amp_scale * snrs[m] * signs[m] * bases[m]
            else:
                for m in MODALITY_FIELDS:
                    noise = rng.standard_normal(dims[m])
                    direction = bases[m][groups[m][label]]
                    feats[m] = noise + amp_scale * snrs[m] * direction
            utterances.append(Utterance(feats["s"], feats["v"], feats["t"], label))
            prev_label = label
        conversations.append(Conversation(f"conv{ci:05d}", speaker, utterances,
                                          spec.n_classes))
    return conversations


def speaker_split(conversations: list[Conversation], fraction: float,
                  seed: int) -> tuple[list[Conversation], list[Conversation]]:
    """Split by speaker id: no speaker crosses the train/test boundary."""
    speakers = sorted({c.speaker for c in conversations})
    if len(speakers) < 2:
        raise ValueError(f"need at least 2 speakers to split, found {len(speakers)}")
    rng = np.random.default_rng(seed)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    n_train = round(fraction * len(speakers))
    if n_train < 1 or n_train >= len(speakers):
        raise ValueError(
            f"fraction {fraction} leaves an empty split over {len(speakers)} speakers")
    train_speakers = set(order[:n_train])
    train, test = [], []
    for conv in conversations:
        if conv.speaker in train_speakers:
            conv.split = "train"
            train.append(conv)
        else:
            conv.split = "test"
            test.append(conv)
    return train, test
