"""NGSIM-format trajectory ingestion.

CSV -> per-vehicle SI trajectories -> filtering -> smoothing -> lane-change
detection -> neighbour attachment -> episodes -> 2-s training windows.

Positions: ``x_long`` is the longitudinal coordinate (NGSIM Local_Y) and
``y_lat`` the lateral one (Local_X, measured from the left road edge, so lane
lines sit at multiples of the lane width).
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from lanecoop import DT, LANE_WIDTH
from lanecoop.detect import DetectConfig, LcEvent, detect_two_pass
from lanecoop.errors import FormatError
from lanecoop.numeric import make_rng, rolling_median, savgol_filter

FT = 0.3048
COLUMNS = ("Vehicle_ID", "Frame_ID", "Local_X", "Local_Y", "v_Vel", "v_Acc", "Lane_ID", "v_Class")
CAR = 2
X_MIN, X_MAX = 300 * FT, 1900 * FT
MARGIN_FRAMES = 100  # 10 s at 10 Hz
WINDOW, STRIDE, LC_HORIZON = 20, 10, 20
FEATURE_NAMES = ("v_E", "a_E", "lane_offset", "v_lat",
                 "v_f", "v_tr", "d_Ef", "d_Etr", "dv_f", "dv_tr")
STYLE_UNASSIGNED = 255


@dataclass(frozen=True)
class RawRecord:
    vehicle_id: int
    frame_id: int
    local_x: float
    local_y: float
    v_vel: float
    v_acc: float
    lane_id: int
    v_class: int


@dataclass
class RawTable:
    """Column arrays sorted by (vehicle_id, frame_id)."""

    vehicle_id: np.ndarray
    frame_id: np.ndarray
    local_x: np.ndarray
    local_y: np.ndarray
    v_vel: np.ndarray
    v_acc: np.ndarray
    lane_id: np.ndarray
    v_class: np.ndarray

    def __len__(self):
        return len(self.vehicle_id)

    def take(self, idx) -> "RawTable":
        return RawTable(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def records(self):
        for i in range(len(self)):
            yield RawRecord(int(self.vehicle_id[i]), int(self.frame_id[i]), float(self.local_x[i]),
                            float(self.local_y[i]), float(self.v_vel[i]), float(self.v_acc[i]),
                            int(self.lane_id[i]), int(self.v_class[i]))

    def groups(self):
        """``(vehicle_id, slice)`` per vehicle, in id order."""
        if not len(self):
            return
        cuts = np.flatnonzero(np.diff(self.vehicle_id)) + 1
        starts = np.concatenate([[0], cuts])
        stops = np.concatenate([cuts, [len(self)]])
        for a, b in zip(starts, stops):
            yield int(self.vehicle_id[a]), slice(int(a), int(b))


def parse_csv(path) -> RawTable:
    """Read the NGSIM columns; extra columns are ignored."""
    int_cols = {"Vehicle_ID", "Frame_ID", "Lane_ID", "v_Class"}
    data = {c: [] for c in COLUMNS}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        pos = {}
        for col in COLUMNS:
            if col not in header:
                raise FormatError(f"{path}: missing column {col}")
            pos[col] = header.index(col)
        need = max(pos.values()) + 1
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            line = reader.line_num
            if len(row) < need:
                raise FormatError(f"{path}:{line}: truncated row ({len(row)} fields, need {need})")
            for col in COLUMNS:
                cell = row[pos[col]].strip()
                try:
                    val = float(cell)
                except ValueError:
                    raise FormatError(f"{path}:{line}: non-numeric {col} value {cell!r}") from None
                if not math.isfinite(val):
                    raise FormatError(f"{path}:{line}: non-finite {col} value {cell!r}")
                data[col].append(val)
    arr = {c: np.asarray(v, dtype=np.int64 if c in int_cols else float) for c, v in data.items()}
    order = np.lexsort((arr["Frame_ID"], arr["Vehicle_ID"]))
    table = RawTable(*(arr[c][order] for c in COLUMNS))
    # duplicated (vehicle, frame) rows: keep the first
    keep = np.ones(len(table), dtype=bool)
    keep[1:] = (np.diff(table.vehicle_id) != 0) | (np.diff(table.frame_id) != 0)
    return table.take(keep) if not keep.all() else table


# ------------------------------------------------------------ trajectories


@dataclass
class Trajectory:
    vehicle_id: int
    frame: np.ndarray
    t: np.ndarray
    x_long: np.ndarray
    y_lat: np.ndarray
    v: np.ndarray
    a: np.ndarray
    lane_id: np.ndarray
    v_class: int = CAR
    y_base: np.ndarray | None = None  # lateral trace after the median stage only
    flags: tuple = ()

    def __len__(self):
        return len(self.frame)

    def take(self, sl) -> "Trajectory":
        return Trajectory(self.vehicle_id, self.frame[sl], self.t[sl], self.x_long[sl], self.y_lat[sl],
                          self.v[sl], self.a[sl], self.lane_id[sl], self.v_class,
                          None if self.y_base is None else self.y_base[sl], self.flags)


def _longest_run(frames):
    if len(frames) < 2:
        return slice(0, len(frames))
    breaks = np.flatnonzero(np.diff(frames) != 1) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(frames)]])
    k = int(np.argmax(stops - starts))  # first longest run on ties
    return slice(int(starts[k]), int(stops[k]))


def to_si(table: RawTable, sl=slice(None)) -> Trajectory:
    """Convert one vehicle's rows to SI units, keeping the longest gap-free frame run."""
    frames = table.frame_id[sl]
    run = _longest_run(frames)
    g = lambda col: getattr(table, col)[sl][run]  # noqa: E731
    frame = g("frame_id")
    return Trajectory(
        vehicle_id=int(table.vehicle_id[sl][0]) if len(frames) else -1,
        frame=frame.copy(),
        t=frame * DT,
        x_long=g("local_y") * FT,
        y_lat=g("local_x") * FT,
        v=g("v_vel") * FT,
        a=g("v_acc") * FT,
        lane_id=g("lane_id").copy(),
        v_class=int(g("v_class")[0]) if len(frame) else 0,
    )


def lane_transitions(lane_id) -> np.ndarray:
    """Indices ``i`` where ``lane_id[i+1] != lane_id[i]``."""
    return np.flatnonzero(np.diff(np.asarray(lane_id)) != 0)


def filter_vehicles(trajectories, lanes=(1, 2, 3, 4)):
    """Apply the class / lane / single-change / span / margin rules.

    Returns ``(kept, dropped)`` where ``dropped`` counts reasons. The span
    rule crops each trajectory to [300 ft, 1900 ft] before the other checks.
    """
    kept, dropped = [], Counter()
    for tr in trajectories:
        if tr.v_class != CAR:
            dropped["class"] += 1
            continue
        inside = np.flatnonzero((tr.x_long >= X_MIN) & (tr.x_long <= X_MAX))
        if not len(inside):
            dropped["span"] += 1
            continue
        tr = tr.take(slice(int(inside[0]), int(inside[-1]) + 1))
        if not np.all(np.isin(tr.lane_id, lanes)):
            dropped["lane"] += 1
            continue
        trans = lane_transitions(tr.lane_id)
        if len(trans) != 1:
            dropped["lane_changes" if len(trans) else "no_lane_change"] += 1
            continue
        k = int(trans[0])
        if k + 1 < MARGIN_FRAMES or len(tr) - (k + 1) < MARGIN_FRAMES:
            dropped["margin"] += 1
            continue
        kept.append(tr)
    return kept, dropped


def smooth(traj: Trajectory, median_window: int = 51, sg_window: int = 11, poly_order: int = 3,
           dt: float = DT) -> Trajectory:
    """Rolling median then Savitzky-Golay on both positions; v and a re-derived."""
    n = len(traj)
    if n < median_window or n < sg_window:
        return Trajectory(**{**traj.__dict__, "flags": traj.flags + ("short_for_smoothing",)})
    x_med = rolling_median(traj.x_long, median_window)
    y_med = rolling_median(traj.y_lat, median_window)
    x = savgol_filter(x_med, sg_window, poly_order)
    y = savgol_filter(y_med, sg_window, poly_order)
    v = np.gradient(x, dt, edge_order=2)
    a = np.gradient(v, dt, edge_order=2)
    return Trajectory(traj.vehicle_id, traj.frame, traj.t, x, y, v, a, traj.lane_id,
                      traj.v_class, y_med, traj.flags)


def plausible(traj: Trajectory, max_dv: float = 10.0) -> bool:
    return len(traj) < 2 or float(np.max(np.abs(np.diff(traj.v)))) <= max_dv


def detect_lane_change(traj: Trajectory, config: DetectConfig = DetectConfig()) -> LcEvent | None:
    base = traj.y_base if traj.y_base is not None else traj.y_lat
    return detect_two_pass(base, config)


# --------------------------------------------------------------- neighbours


@dataclass
class Neighbor:
    vehicle_id: int
    x_long: np.ndarray  # on the ego frame grid
    v: np.ndarray
    style_features: np.ndarray  # of the vehicle's own observed track


@dataclass
class Episode:
    ego: Trajectory
    lead: Neighbor
    t_rear: Neighbor
    lc_start_idx: int
    lc_end_idx: int
    direction: str
    origin_lane: int
    target_lane: int

    @property
    def d_ef(self):
        return np.maximum(self.lead.x_long - self.ego.x_long, 0.0)

    @property
    def d_etr(self):
        return np.maximum(self.ego.x_long - self.t_rear.x_long, 0.0)

    def to_dict(self) -> dict:
        r = lambda a: [round(float(x), 6) for x in a]  # noqa: E731
        e = self.ego
        return {
            "vehicle_id": e.vehicle_id, "frame0": int(e.frame[0]), "n": len(e),
            "lc_start_idx": self.lc_start_idx, "lc_end_idx": self.lc_end_idx,
            "direction": self.direction, "origin_lane": self.origin_lane, "target_lane": self.target_lane,
            "ego": {"x": r(e.x_long), "y": r(e.y_lat), "v": r(e.v), "a": r(e.a),
                    "lane": [int(k) for k in e.lane_id]},
            "lead": {"id": self.lead.vehicle_id, "x": r(self.lead.x_long), "v": r(self.lead.v),
                     "style_features": r(self.lead.style_features)},
            "t_rear": {"id": self.t_rear.vehicle_id, "x": r(self.t_rear.x_long), "v": r(self.t_rear.v),
                       "style_features": r(self.t_rear.style_features)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        try:
            n = int(d["n"])
            frame = int(d["frame0"]) + np.arange(n)
            eg = d["ego"]
            ego = Trajectory(int(d["vehicle_id"]), frame, frame * DT, np.asarray(eg["x"], float),
                             np.asarray(eg["y"], float), np.asarray(eg["v"], float),
                             np.asarray(eg["a"], float), np.asarray(eg["lane"], np.int64))
            nb = lambda k: Neighbor(int(d[k]["id"]), np.asarray(d[k]["x"], float),  # noqa: E731
                                    np.asarray(d[k]["v"], float),
                                    np.asarray(d[k]["style_features"], float))
            ep = cls(ego, nb("lead"), nb("t_rear"), int(d["lc_start_idx"]), int(d["lc_end_idx"]),
                     d["direction"], int(d["origin_lane"]), int(d["target_lane"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed episode record: {exc}") from None
        for arr in (ego.x_long, ego.y_lat, ego.v, ego.a, ep.lead.x_long, ep.t_rear.x_long):
            if len(arr) != n:
                raise FormatError(f"episode {ego.vehicle_id}: array length {len(arr)} != n={n}")
        return ep


class FrameIndex:
    """All vehicles' SI positions, searchable by frame and by vehicle."""

    def __init__(self, table: RawTable):
        self.table = table
        order = np.argsort(table.frame_id, kind="stable")
        self._by_frame = order
        self._frames_sorted = table.frame_id[order]
        self._slices = dict(table.groups())
        self._tracks: dict[int, tuple] = {}

    def at(self, frame: int):
        """``(vehicle_ids, x_long, lane_id)`` of everything present at ``frame``."""
        lo = np.searchsorted(self._frames_sorted, frame, "left")
        hi = np.searchsorted(self._frames_sorted, frame, "right")
        idx = self._by_frame[lo:hi]
        t = self.table
        return t.vehicle_id[idx], t.local_y[idx] * FT, t.lane_id[idx]

    def track(self, vid: int):
        """Smoothed ``(frames, x, v, a)`` of one vehicle's longest gap-free run."""
        if vid not in self._tracks:
            tr = to_si(self.table, self._slices[vid])
            if len(tr) >= 51:
                tr = smooth(tr)
            elif len(tr) >= 3:
                tr.v = np.gradient(tr.x_long, DT)
                tr.a = np.gradient(tr.v, DT)
            self._tracks[vid] = (tr.frame, tr.x_long, tr.v, tr.a)
        return self._tracks[vid]


def align(frames_ego, frames_nb, x_nb, v_nb):
    """Neighbour position/speed on the ego grid; constant-velocity extrapolation outside its run."""
    x = np.empty(len(frames_ego))
    v = np.empty(len(frames_ego))
    f0, f1 = frames_nb[0], frames_nb[-1]
    for i, f in enumerate(frames_ego):
        if f < f0:
            v[i] = v_nb[0]
            x[i] = x_nb[0] - v_nb[0] * (f0 - f) * DT
        elif f > f1:
            v[i] = v_nb[-1]
            x[i] = x_nb[-1] + v_nb[-1] * (f - f1) * DT
        else:
            k = f - f0
            x[i], v[i] = x_nb[k], v_nb[k]
    return x, v


def attach_neighbors(ego: Trajectory, event: LcEvent, index: FrameIndex, max_rear_gap: float = 150.0):
    """Build an Episode, or return ``(None, reason)``.

    Lead and target-rear identities are resolved once, at the lane-change start
    frame, and kept for the whole episode.
    """
    from lanecoop.style import extract_features  # local: style imports numeric only

    trans = lane_transitions(ego.lane_id)
    origin = int(ego.lane_id[0])
    target = int(ego.lane_id[trans[0] + 1]) if len(trans) else origin
    f0 = int(ego.frame[event.start_idx])
    x_e = float(ego.x_long[event.start_idx])
    vids, xs, lanes = index.at(f0)
    mask_other = vids != ego.vehicle_id
    ahead = mask_other & (lanes == origin) & (xs > x_e)
    behind = mask_other & (lanes == target) & (xs < x_e)
    if not behind.any():
        return None, "no_t_rear"
    j_rear = np.flatnonzero(behind)[np.argmax(xs[behind])]
    if x_e - xs[j_rear] > max_rear_gap:
        return None, "no_t_rear"
    if not ahead.any():
        return None, "no_lead"
    j_lead = np.flatnonzero(ahead)[np.argmin(xs[ahead])]
    nbs = []
    for j in (j_lead, j_rear):
        frames, x, v, a = index.track(int(vids[j]))
        xa, va = align(ego.frame, frames, x, v)
        feats = extract_features(v, a) if len(v) >= 20 else np.full(6, np.nan)
        nbs.append(Neighbor(int(vids[j]), xa, va, np.asarray(feats, float)))
    direction = "right" if ego.y_lat[event.end_idx] > ego.y_lat[event.start_idx] else "left"
    return Episode(ego, nbs[0], nbs[1], event.start_idx, event.end_idx, direction, origin, target), None


# ------------------------------------------------------------------ samples


@dataclass
class SampleSet:
    features: np.ndarray  # (n, WINDOW, 10)
    style_features: np.ndarray  # (n, 6) of the target-rear vehicle
    style: np.ndarray  # (n,) 0 aggressive, 1 normal, 2 conservative, 255 unassigned
    action: np.ndarray  # (n,) 0 LK, 1 LC
    split: np.ndarray  # (n,) 0 train, 1 validation
    episode: np.ndarray  # (n,) episode index
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.action)

    @property
    def inner(self):
        return self.features[..., :4]

    @property
    def inter(self):
        return self.features[..., 4:]

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.features[mask], self.style_features[mask], self.style[mask],
                         self.action[mask], self.split[mask], self.episode[mask], dict(self.meta))

    def train(self):
        return self.subset(self.split == 0)

    def val(self):
        return self.subset(self.split == 1)


def stratified_split(labels, val_fraction: float = 0.2, seed: int = 42) -> np.ndarray:
    """0/1 split array; each class contributes round(fraction * count) validation items."""
    labels = np.asarray(labels)
    rng = make_rng(seed)
    split = np.zeros(len(labels), dtype=np.uint8)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        split[idx[:int(round(val_fraction * len(idx)))]] = 1
    return split


def episode_features(ep: Episode, dt: float = DT, lane_width: float = LANE_WIDTH) -> np.ndarray:
    """Per-frame 10-feature matrix ``(n, 10)`` in FEATURE_NAMES order."""
    e = ep.ego
    offset = e.y_lat - (np.floor(e.y_lat / lane_width) + 0.5) * lane_width
    v_lat = np.gradient(e.y_lat, dt) if len(e) > 1 else np.zeros(len(e))
    return np.column_stack([e.v, e.a, offset, v_lat, ep.lead.v, ep.t_rear.v,
                            ep.d_ef, ep.d_etr, ep.lead.v - e.v, ep.t_rear.v - e.v])


def label_windows(n: int, lc_start: int, window: int = WINDOW, stride: int = STRIDE,
                  horizon: int = LC_HORIZON):
    """Window start indices and LK/LC labels for an ``n``-frame episode."""
    starts = np.arange(0, n - window + 1, stride)
    ends = starts + window - 1
    labels = ((ends >= lc_start - horizon) & (ends <= lc_start)).astype(np.uint8)
    return starts, labels


def make_samples(episodes, seed: int = 42, window: int = WINDOW, stride: int = STRIDE) -> SampleSet:
    feats, sfeat, actions, epi = [], [], [], []
    for k, ep in enumerate(episodes):
        f = episode_features(ep)
        starts, labels = label_windows(len(ep.ego), ep.lc_start_idx, window, stride)
        for s, lab in zip(starts, labels):
            feats.append(f[s:s + window])
            sfeat.append(ep.t_rear.style_features)
            actions.append(lab)
            epi.append(k)
    n = len(actions)
    action = np.asarray(actions, dtype=np.uint8)
    return SampleSet(
        features=np.asarray(feats, dtype=float).reshape(n, window, len(FEATURE_NAMES)),
        style_features=np.asarray(sfeat, dtype=float).reshape(n, 6),
        style=np.full(n, STYLE_UNASSIGNED, dtype=np.uint8),
        action=action,
        split=stratified_split(action, 0.2, seed),
        episode=np.asarray(epi, dtype=np.uint32),
    )


MAGIC = b"LCSAMP01"


def write_samples(path, samples: SampleSet, prov: dict) -> None:
    """Flat binary: magic, uint32 header length, JSON header, then the arrays.

    Array order: features float32 (n, T, F), style_features float32 (n, 6),
    episode uint32 (n), style uint8 (n), action uint8 (n), split uint8 (n).
    All little-endian, row-major.
    """
    n, T, F = samples.features.shape
    header = {"_provenance": prov, "n": n, "window": T, "n_features": F, "n_style_features": 6,
              "feature_names": list(FEATURE_NAMES),
              "arrays": ["features<f4", "style_features<f4", "episode<u4", "style|u1", "action|u1", "split|u1"],
              "meta": samples.meta}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(samples.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(samples.style_features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(samples.episode, dtype="<u4").tobytes())
        for arr in (samples.style, samples.action, samples.split):
            fh.write(np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def read_samples(path) -> SampleSet:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a samples file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12:12 + hlen])
        n, T, F, S = header["n"], header["window"], header["n_features"], header["n_style_features"]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    off = 12 + hlen
    sizes = [(n * T * F, "<f4"), (n * S, "<f4"), (n, "<u4"), (n, "u1"), (n, "u1"), (n, "u1")]
    need = off + sum(c * np.dtype(d).itemsize for c, d in sizes)
    if len(raw) != need:
        raise FormatError(f"{path}: size {len(raw)} bytes, header implies {need}")
    arrays = []
    for count, dtype in sizes:
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += count * np.dtype(dtype).itemsize
        arrays.append(arr)
    return SampleSet(arrays[0].astype(float).reshape(n, T, F), arrays[1].astype(float).reshape(n, S),
                     arrays[3].copy(), arrays[4].copy(), arrays[5].copy(), arrays[2].copy(),
                     header.get("meta", {}))


# ----------------------------------------------------------------- pipeline


@dataclass
class IngestResult:
    episodes: list
    samples: SampleSet
    counts: Counter


def run(path, seed: int = 42, detect_config: DetectConfig = DetectConfig(),
        max_rear_gap: float = 150.0) -> IngestResult:
    table = parse_csv(path)
    index = FrameIndex(table)
    trajs = [to_si(table, sl) for _, sl in table.groups()]
    counts = Counter(vehicles=len(trajs))
    kept, dropped = filter_vehicles(trajs)
    counts.update({f"drop_{k}": v for k, v in dropped.items()})
    episodes = []
    for tr in kept:
        sm = smooth(tr)
        if "short_for_smoothing" in sm.flags:
            counts["drop_short"] += 1
            continue
        if not plausible(sm):
            counts["drop_implausible"] += 1
            continue
        ev = detect_lane_change(sm, detect_config)
        if ev is None:
            counts["drop_no_event"] += 1
            continue
        k = int(lane_transitions(sm.lane_id)[0])
        if not ev.start_idx - 15 <= k <= ev.end_idx + 15:
            counts["drop_detect_mismatch"] += 1
            continue
        if ev.start_idx < MARGIN_FRAMES or len(sm) - 1 - ev.end_idx < MARGIN_FRAMES:
            counts["drop_margin_after_detect"] += 1
            continue
        ep, reason = attach_neighbors(sm, ev, index, max_rear_gap)
        if ep is None:
            counts[f"drop_{reason}"] += 1
            continue
        if not np.all(np.isfinite(ep.t_rear.style_features)):
            counts["drop_short_t_rear"] += 1
            continue
        episodes.append(ep)
    counts["episodes"] = len(episodes)
    samples = make_samples(episodes, seed)
    counts["samples"] = len(samples)
    counts["samples_lc"] = int(samples.action.sum())
    return IngestResult(episodes, samples, counts)
