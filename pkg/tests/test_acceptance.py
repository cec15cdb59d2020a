"""Exit criteria, each at its stated tolerance and time budget.

Every test prints one ``PASS``/``FAIL``/``WARN`` line. A failing criterion
fails its test; nothing here is loosened to make a number come out right.
"""

import csv
import time

import numpy as np
import pytest

from mhealth.clock import SimClock
from mhealth.engine import Hyperparams, MlpModel, gradients, init_model, input_study
from mhealth.engine.mlp import loss
from mhealth.engine.study import REFERENCE_MEDIANS, reference_model, synthesize_dataset
from mhealth.engine.training import evaluate, evaluate_arrays, train_arrays
from mhealth.gateway.link import LinkScript, LinkSegment
from mhealth.gateway.locator import CellDatabase, CellRecord, UnknownCell, resolve_location
from mhealth.sensor.codec import FrameError, decode_frame, encode_frame, pack_words
from mhealth.sensor.generator import EpisodeScript, PatientProfile
from mhealth.server import Duplicate, MedicalServer, RecordStore, TokenTable
from mhealth.simulate import DEFAULT_CELLS, PositionTrack, ScenarioConfig, rising_edges, run_scenario
from mhealth.vitals import CellIdentity, LocationFix, LocationSource, VitalsSample

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed, budget, soft=False):
        in_time = elapsed < budget
        status = "PASS" if ok and in_time else ("WARN" if soft else "FAIL")
        with capsys.disabled():
            print(f"\n[criterion {n:>2}] {status}  {detail}  ({elapsed:.2f}s of {budget:g}s)")
        return ok and in_time
    return emit


@pytest.fixture(scope="module")
def study():
    t0 = time.perf_counter()
    rep = input_study(seed=0, trials=11)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def model():
    return reference_model(0)


# 1 ------------------------------------------------------------------------------------

def _numeric(m, x, t, eps=1e-5):
    flat = np.concatenate([m.W1.ravel(), m.b1, m.W2.ravel(), [m.b2]])
    h, n = m.n_hidden, m.n_inputs

    def unflat(v):
        return MlpModel(n, h, v[:h * n], v[h * n:h * n + h], v[h * n + h:h * n + 2 * h], v[-1])

    g = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += eps
        dn[i] -= eps
        g[i] = (loss(unflat(up), x, t) - loss(unflat(dn), x, t)) / (2 * eps)
    return g


def test_c1_gradient_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, bad, checked = 0.0, 0, 0
    for k in range(100):
        n, h = (3, 4)[k % 2], (1, 5, 8)[k % 3]
        m = init_model(n, h, int(rng.integers(2**31)), init_scale=1.0)
        m = MlpModel(n, h, m.W1, rng.uniform(-1, 1, h), m.W2, float(rng.uniform(-1, 1)))
        x, t = rng.random(n), float(rng.integers(2))
        g = gradients(m, x, t)
        a = np.concatenate([g.W1.ravel(), g.b1, g.W2.ravel(), [g.b2]])
        num = _numeric(m, x, t)
        tol = np.maximum(1e-6 * np.abs(num), 1e-8)
        bad += int((np.abs(a - num) > tol).sum())
        worst = max(worst, float((np.abs(a - num) / tol).max()))
        checked += a.size
    ok = report(1, bad == 0, f"{checked} partials, {bad} outside tolerance, worst err/tol={worst:.3f}",
                time.perf_counter() - t0, 10)
    assert ok


# 2 ------------------------------------------------------------------------------------

XOR_X = np.array([[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
XOR_Y = np.array([0, 1, 1, 0])


def test_c2_xor_convergence(report):
    t0 = time.perf_counter()
    solved, detail = 0, []
    for seed in range(10):
        res = train_arrays(init_model(3, 5, seed), XOR_X, XOR_Y, Hyperparams(seed=seed))
        correct = int(round(evaluate_arrays(res.model, XOR_X, XOR_Y).accuracy * 4))
        solved += correct == 4
        detail.append(f"{correct}/4")
    ok = report(2, solved >= 9, f"{solved}/10 seeds solve XOR under defaults ({' '.join(detail)})",
                time.perf_counter() - t0, 30)
    assert ok


# 3, 4 -----------------------------------------------------------------------------------

def test_c3_input_study_shape(report, study):
    rep, elapsed = study
    a3, a4 = rep.median_accuracy(3), rep.median_accuracy(4)
    ok = a4 >= a3 + 0.02 and a4 >= 0.85
    ok = report(3, ok, f"median acc3={a3:.4f} acc4={a4:.4f} gap={a4 - a3:+.4f} (need >= +0.02, "
                f"acc4 >= 0.85); reference medians {REFERENCE_MEDIANS[3]:.2f}/{REFERENCE_MEDIANS[4]:.2f}",
                elapsed, 300)
    assert ok


def test_c4_convergence_cost(report, study):
    rep, elapsed = study
    e3, e4 = rep.median_epochs(3), rep.median_epochs(4)
    report(4, e4 >= e3, f"median epochs-to-target n3={e3:.0f} n4={e4:.0f} (soft check)",
           elapsed, 300, soft=True)
    if e4 < e3:
        import warnings

        warnings.warn(f"4-input arm converged faster ({e4:.0f} < {e3:.0f} epochs)")


# 5 ---------------------------------------------------------------------------------------

def test_c5_codec(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    n = 10_000
    words = np.column_stack([
        rng.integers(0, 2**63, n, dtype=np.uint64),
        rng.integers(0, 1001, n), rng.integers(0, 3001, n),
        rng.integers(2500, 4501, n), rng.integers(0, 1001, n),
    ])
    mismatches = 0
    for ts, sp, hr, tc, act in words:
        s = VitalsSample(int(ts), sp / 10, hr / 10, tc / 100, act / 1000)
        frame = encode_frame(s)
        mismatches += decode_frame(frame) != s or frame != pack_words(int(ts), int(sp), int(hr),
                                                                    int(tc), int(act))
    base = encode_frame(VitalsSample(1_700_000_000_000, 97.5, 72.3, 36.85, 0.2))
    accepted, tried = 0, 0
    for pos in range(len(base)):
        for delta in range(1, 256):
            bad = bytearray(base)
            bad[pos] ^= delta
            tried += 1
            try:
                decode_frame(bytes(bad))
                accepted += 1
            except FrameError:
                pass
    ok = report(5, mismatches == 0 and accepted == 0,
                f"{n} round trips, {mismatches} mismatches; {tried} single-byte corruptions "
                f"(all 23 positions), {accepted} accepted", time.perf_counter() - t0, 5)
    assert ok


# 6 ---------------------------------------------------------------------------------------

OUTAGES = [(30, 90), (150, 210), (270, 330), (390, 450), (510, 570)]


def _record_key(records):
    return [(e.upload.sequence_no, e.upload.sample, e.upload.location, e.state) for e in records]


def test_c6_store_and_forward(report, model):
    t0 = time.perf_counter()
    script = EpisodeScript.of((100, 160, "hypoxia"), (400, 460, "fever"))
    link = LinkScript([LinkSegment(a, b, False) for a, b in OUTAGES])
    down = run_scenario(ScenarioConfig(script=script, link=link, seed=6), model=model)
    clean = run_scenario(ScenarioConfig(script=script, seed=6), model=model)
    rep = down.report
    acked = down.acked
    stored = [e.upload.sequence_no for e in down.records]
    in_order = all(b > a for a, b in zip(acked, acked[1:]))
    lost = set(acked) - set(stored)
    same = _record_key(down.records) == _record_key(clean.records)
    ok = (rep["link_down_s"] == 300 and not lost and in_order and same and rep["still_buffered"] == 0
          and not rep["violations"])
    ok = report(6, ok, f"down {rep['link_down_s']:.0f}/600 s, buffered={rep['buffered']} "
                f"flushed={rep['flushed']} lost={len(lost)} in_order={in_order} "
                f"record_equal_to_clean_run={same} ({len(down.records)} uploads)",
                time.perf_counter() - t0, 10)
    assert ok


# 7 ---------------------------------------------------------------------------------------

def test_c7_change_suppression(report):
    t0 = time.perf_counter()
    flat = PatientProfile(spo2_sd=0, hr_sd=0, temp_sd=0, activity_sd=0)
    r = run_scenario(ScenarioConfig(profile=flat, duration_s=600, seed=7))
    expected = 1 + 599 // 60
    ok = report(7, r.report["forwards"] == expected and r.report["suppressed"] == 600 - expected,
                f"forwards={r.report['forwards']} (expected {expected}), "
                f"suppressed={r.report['suppressed']}", time.perf_counter() - t0, 5)
    assert ok


# 8 ---------------------------------------------------------------------------------------

def _csv_oracle(path, gps, cell):
    if gps is not None:
        return ("GPS", gps.lat_deg, gps.lon_deg)
    if cell is None:
        return "UnknownCell"
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["mcc"]), int(row["mnc"]), int(row["lac"]), int(row["ci"]))
            if key == (cell.mcc, cell.mnc, cell.lac, cell.ci):
                return ("CELL", float(row["lat"]), float(row["lon"]))
    return "UnknownCell"


def test_c8_hybrid_locator(report, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    db = CellDatabase()
    known = []
    for i in range(200):
        cell = CellIdentity(int(rng.integers(200, 800)), int(rng.integers(0, 1000)),
                            int(rng.integers(1, 65535)), int(rng.integers(0, 2**28)))
        if cell in db:
            continue
        db.add(cell, CellRecord(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)),
                                float(rng.uniform(50, 5000))))
        known.append(cell)
    path = tmp_path / "cells.csv"
    db.to_csv(path)
    loaded = CellDatabase.from_csv(path)
    mismatches = 0
    for _ in range(1000):
        gps = None
        if rng.random() < 0.4:
            gps = LocationFix(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)),
                              LocationSource.GPS, 5.0)
        roll = rng.random()
        if roll < 0.45:
            cell = known[int(rng.integers(len(known)))]
        elif roll < 0.9:
            cell = CellIdentity(int(rng.integers(200, 800)), int(rng.integers(0, 1000)),
                                int(rng.integers(1, 65535)), int(rng.integers(0, 2**28)))
            assert cell not in db
        else:
            cell = None
        want = _csv_oracle(path, gps, cell)
        try:
            fix = resolve_location(gps, cell, loaded)
            got = (fix.source.value, fix.lat_deg, fix.lon_deg)
        except UnknownCell:
            got = "UnknownCell"
        mismatches += got != want
    ok = report(8, mismatches == 0, f"1000 trials against a CSV scan, {mismatches} mismatches",
                time.perf_counter() - t0, 2)
    assert ok


# 9 ---------------------------------------------------------------------------------------

def _expected_fixes(records):
    """Replay the locator over forwarded samples, with last-known-fix fallback."""
    track, db = PositionTrack(), CellDatabase(DEFAULT_CELLS)
    last, out = None, {}
    for e in records:
        gps, cell = track(e.upload.sample.timestamp_ms)
        try:
            last = resolve_location(gps, cell, db)
        except UnknownCell:
            pass
        out[e.upload.sample.timestamp_ms] = last
    return out


def test_c9_end_to_end_alerting(report, model):
    t0 = time.perf_counter()
    held_out = synthesize_dataset(540, seed=99)
    acc = evaluate(model, held_out).accuracy
    hyp = run_scenario(ScenarioConfig(script=EpisodeScript.of((200, 260, "hypoxia")), seed=9),
                       model=model)
    base = run_scenario(ScenarioConfig(seed=9), model=model)
    edges = rising_edges([e.state for e in hyp.records])
    fixes = _expected_fixes(hyp.records)
    located = all(a.location == fixes[a.triggering_sample.timestamp_ms] for a in hyp.alerts)
    low = all(a.triggering_sample.spo2_pct < 90 for a in hyp.alerts)
    ok = (len(hyp.alerts) >= 1 and len(hyp.alerts) == edges and located and low
          and len(base.alerts) == 0 and hyp.ok and base.ok)
    ok = report(9, ok, f"hypoxia alerts={len(hyp.alerts)} edges={edges} located={located} "
                f"spo2<90={low}; baseline alerts={len(base.alerts)}; model held-out acc={acc:.3f}",
                time.perf_counter() - t0, 30)
    assert ok


# 10 --------------------------------------------------------------------------------------

def _durable(path, model, clock):
    return MedicalServer(TokenTable({"tok-p1": "p1"}), model, RecordStore(path, fsync=False), clock)


def test_c10_idempotent_ingestion(report, model, tmp_path):
    t0 = time.perf_counter()
    cfg = ScenarioConfig(script=EpisodeScript.of((100, 150, "tachycardia"), (300, 380, "hypoxia")),
                         link=LinkScript([LinkSegment(50, 120, False)]), seed=10)
    first = run_scenario(cfg, model=model)
    uploads = [e.upload for e in first.records]

    clock = SimClock(0)
    single = _durable(tmp_path / "single", model, clock)
    for u in uploads:
        clock.set(max(clock(), u.sample.timestamp_ms))
        single.ingest("tok-p1", u)
    snap, hist, alerts = single.get_status("p1"), single.query_history("p1"), single.alerts()
    dupes = 0
    for _ in range(3):
        for u in uploads:
            dupes += isinstance(single.ingest("tok-p1", u), Duplicate)
    replay_ok = (dupes == 3 * len(uploads) and single.get_status("p1") == snap
                 and single.query_history("p1") == hist and single.alerts() == alerts)

    clock2 = SimClock(0)
    half = len(uploads) // 2
    a = _durable(tmp_path / "restart", model, clock2)
    for u in uploads[:half]:
        clock2.set(max(clock2(), u.sample.timestamp_ms))
        a.ingest("tok-p1", u)
    mid = a.get_status("p1")
    a.close()
    b = _durable(tmp_path / "restart", model, clock2)
    restored = b.get_status("p1") == mid
    for u in uploads[half:]:
        clock2.set(max(clock2(), u.sample.timestamp_ms))
        b.ingest("tok-p1", u)
    restart_ok = (restored and b.get_status("p1") == snap and b.query_history("p1") == hist
                  and b.alerts() == alerts)
    ok = report(10, replay_ok and restart_ok,
                f"{len(uploads)} uploads replayed 3x -> {dupes} duplicates, unchanged={replay_ok}; "
                f"restart after {half}: snapshot restored={restored}, final equal={restart_ok}",
                time.perf_counter() - t0, 10)
    assert ok
