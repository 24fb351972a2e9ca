"""End-to-end acceptance criteria; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from c2p import sdp
from c2p.baselines import Method, midpoint_signs_batch, solve_two_step
from c2p.geometry import Correspondences, RelativePose, adjugate, essential_from_pose, skew
from c2p.problem import Variant, build_qcqp
from c2p.recovery import DEFAULT_EPS_T, certify, certify_baseline, eigenvector_poses, solve_c2p
from c2p.sdp import SdpProblem, SolverStatus, kkt_residuals
from c2p.synth import SceneConfig, generate_scene, magnitude_sweep, make_rng, pose_errors

from conftest import ACCEPTANCE_LINES, random_pose, random_rotation, random_unit

GENERAL_MOTION = (0.5, 2.0)
# measured C2P certificate pass count over the 1000 solves of criterion 4
CERT_PASS_REGRESSION = 1000


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _scene(n, noise, seed, *keys, magnitude=GENERAL_MOTION):
    cfg = SceneConfig(n=n, noise_px=noise, seed=seed, translation_magnitude=magnitude)
    return generate_scene(cfg, make_rng(seed, *keys))


def _same_pose(a, b, tol_deg):
    return max(pose_errors(a, b)) < tol_deg


def test_criterion_01_noise_free_exactness():
    scenes = [_scene(50, 0.0, 1, k) for k in range(200)]
    failures = []
    tic = time.perf_counter()
    for k, inst in enumerate(scenes):
        for variant in (Variant.C2P, Variant.C2P_FAST):
            est = solve_c2p(inst.pairs, variant)
            rot, trans = pose_errors(inst.ground_truth, est.pose)
            ok = est.certified and rot < 1e-5 and trans < 1e-5
            ok = ok and est.s_r_squared > 0 and est.s_t_squared > 0
            if not ok:
                failures.append((k, variant.value, rot, trans))
    elapsed = time.perf_counter() - tic
    report(1, not failures and elapsed < 60, f"{400 - len(failures)}/400 exact and certified in {elapsed:.1f} s")


def test_criterion_02_single_step_disambiguation():
    counts = {}
    for noise in (0.0, 1.0):
        agree = 0
        for k in range(200):
            inst = _scene(50, noise, 1 if noise == 0 else 2, k)
            a = solve_c2p(inst.pairs).pose
            b = solve_two_step(inst.pairs, Variant.QCQP_Z, Method.MIDPOINT).pose
            agree += _same_pose(a, b, 0.1)
        counts[noise] = agree
    ok = counts[0.0] == 200 and counts[1.0] >= 198
    report(2, ok, f"agreement noise-free {counts[0.0]}/200, 1 px {counts[1.0]}/200")


def test_criterion_03_adjugate_characterization():
    rng = np.random.default_rng(3)
    worst_adj = 0.0
    for _ in range(10_000):
        R, t = random_rotation(rng), random_unit(rng)
        worst_adj = max(worst_adj, np.max(np.abs(adjugate(skew(t) @ R) - np.outer(R.T @ t, t))))
    worst_sv = 0.0
    for _ in range(1000):
        U, V = random_rotation(rng), random_rotation(rng)
        # sigma0^2 + sigma1^2 = 2 and sigma0 sigma1 = 1, solved for the pair
        s_sum, s_diff = np.sqrt(2 + 2), np.sqrt(max(0.0, 2 - 2))
        M = U @ np.diag([(s_sum + s_diff) / 2, (s_sum - s_diff) / 2, 0.0]) @ V.T
        q, tt = V[:, 2], U[:, 2]
        assert abs(np.trace(M @ M.T) - 2) < 1e-12
        assert np.max(np.abs(adjugate(M) - np.outer(q, tt))) < 1e-12
        worst_sv = max(worst_sv, np.max(np.abs(np.linalg.svd(M, compute_uv=False) - [1, 1, 0])))
    ok = worst_adj < 1e-12 and worst_sv < 1e-9
    report(3, ok, f"max adjugate error {worst_adj:.1e}, max singular value error {worst_sv:.1e}")


def _lift16(pose, h=1.0):
    return np.concatenate([essential_from_pose(pose).reshape(9), pose.translation, pose.q, [h]])


def test_criterion_04_certification():
    rng = np.random.default_rng(4)
    constructed = 0
    for _ in range(50):
        pose = random_pose(rng)
        x0 = _lift16(pose)
        x1 = x0.copy()
        x1[9:15] *= -1
        x2 = x1.copy()
        x2[15] *= -1
        a = rng.dirichlet(np.ones(3))
        X = np.zeros((18, 18))
        X[:16, :16] = sum(w * np.outer(x, x) for w, x in zip(a, (x0, x1, x2)))
        w = np.zeros(18)
        w[:9] = rng.normal(size=9)
        xb = np.concatenate([essential_from_pose(pose).reshape(9), pose.translation])
        yb = xb.copy()
        yb[9:] *= -1
        B = 0.5 * np.outer(xb, xb) + 0.5 * np.outer(yb, yb)
        U = np.linalg.svd(np.column_stack([xb, yb]))[0]
        constructed += (
            certify(X).passed
            and not certify(X + 1e-2 * np.outer(w, w)).passed
            and certify_baseline(B).passed
            and not certify_baseline(B + 1e-2 * np.outer(U[:, 2], U[:, 2])).passed
        )
    noise_levels, sizes = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0), (20, 50, 100)
    passed = 0
    for k in range(1000):
        inst = _scene(sizes[k % 3], noise_levels[k % 6], 4, k)
        passed += solve_c2p(inst.pairs).certified
    ok = constructed == 50 and passed >= 990 and passed >= CERT_PASS_REGRESSION - 5
    report(4, ok, f"constructed {constructed}/50, synthetic pass rate {passed}/1000")


def test_criterion_05_dominant_eigenvector():
    bad = 0
    ratios = []
    for noise in (0.1, 1.0, 10.0):
        for n in (20, 200):
            for k in range(100):
                inst = _scene(n, noise, 5, int(noise * 10), n, k, magnitude=None)
                sol = sdp.solve(SdpProblem.from_qcqp(build_qcqp(inst.pairs, Variant.C2P)))
                ev = eigenvector_poses(sol.X)
                errs = [sum(pose_errors(inst.ground_truth, p)) if p is not None else np.inf for _, p in ev]
                j = int(np.argmin(errs))
                ratios.append(ev[j][0] / ev[0][0])
                bad += j != 0
    report(5, bad == 0, f"solution in eigenvector 0 in {600 - bad}/600 trials, min ratio {min(ratios):.3f}")


def test_criterion_06_pure_rotation_detection():
    flags, rot = {}, {}
    for mag, inst in magnitude_sweep([0, 1e-4, 1e-3, 1e-2, 1e-1, 1], n=100, noise_px=0.5, trials=200, seed=6):
        est = solve_c2p(inst.pairs, eps_t=DEFAULT_EPS_T)
        flags.setdefault(mag, []).append(est.is_pure_rotation)
        rot.setdefault(mag, []).append(pose_errors(inst.ground_truth, est.pose)[0])
    correct = sum(sum(flags[m]) for m in (0, 1e-4, 1e-3)) + sum(200 - sum(flags[m]) for m in (1e-1, 1))
    accuracy = correct / 1000
    worst_median = max(np.median(v) for v in rot.values())
    ok = accuracy >= 0.99 and worst_median < 0.5
    report(6, ok, f"classification accuracy {accuracy:.3f}, worst median rotation error {worst_median:.3f} deg")


def test_criterion_07_runtime_scaling():
    sizes = (100, 1000, 10_000)
    dis, rec, ratio = [], [], []
    for n in sizes:
        d, r, tf, tt = [], [], [], []
        for k in range(7):
            inst = _scene(n, 1.0, 7, n, k)
            t0 = time.perf_counter()
            fast = solve_c2p(inst.pairs, Variant.C2P_FAST)
            t1 = time.perf_counter()
            two = solve_two_step(inst.pairs, Variant.QCQP_Z, Method.TRIANGULATION)
            t2 = time.perf_counter()
            d.append(two.timings["disambiguation_ms"])
            r.append(fast.timings["recovery_ms"])
            tf.append(t1 - t0)
            tt.append(t2 - t1)
        dis.append(np.median(d))
        rec.append(np.median(r))
        ratio.append(np.median(tt) / np.median(tf))
    # a fixed per-call overhead sits on top of the per-correspondence cost, so
    # linear growth shows in the increments: each decade adds ~10x the last one
    growth = (dis[2] - dis[1]) / (dis[1] - dis[0])
    spread = max(rec) / min(rec)
    ok = dis[0] < dis[1] < dis[2] and growth >= 8 and spread < 2 and ratio[-1] > 2
    report(
        7,
        ok,
        f"disambiguation increment growth {growth:.1f}x per decade ({', '.join(f'{v:.1f}' for v in dis)} ms), "
        f"recovery spread {spread:.2f}x, total ratio at 1e4 {ratio[-1]:.1f}",
    )


def test_criterion_08_sign_test_equivalence():
    rng = np.random.default_rng(8)
    checked = mismatched = 0
    for _ in range(1000):
        pose = random_pose(rng)
        f0 = rng.normal(size=(100, 3))
        f1 = rng.normal(size=(100, 3))
        f0 /= np.linalg.norm(f0, axis=1, keepdims=True)
        f1 /= np.linalg.norm(f1, axis=1, keepdims=True)
        front0, front1, valid = midpoint_signs_batch(pose, Correspondences(f0, f1))
        # 2x2 normal equations of min || l0 f0 - l1 R f1 - t ||
        g = f1 @ pose.rotation.T
        c = np.einsum("ij,ij->i", f0, g)
        A = np.stack([np.stack([np.ones_like(c), -c], -1), np.stack([-c, np.ones_like(c)], -1)], 1)
        rhs = np.stack([f0 @ pose.translation, -(g @ pose.translation)], -1)
        lam = np.linalg.solve(A[valid], rhs[valid][..., None])[..., 0]
        checked += int(valid.sum())
        mismatched += int(np.sum((lam[:, 0] > 0) != front0[valid]) + np.sum((lam[:, 1] > 0) != front1[valid]))
    report(8, mismatched == 0 and checked > 99_000, f"{checked - mismatched}/{checked} nondegenerate cases agree")


def test_criterion_09_sdp_solver():
    errors = []
    p1 = SdpProblem(np.eye(2), [(np.eye(2), 1.0)])
    s1 = sdp.solve(p1)
    errors.append(abs(s1.primal_objective - 1.0))
    p2 = SdpProblem(np.diag([1.0, 2.0]), [(np.eye(2), 1.0)])
    s2 = sdp.solve(p2)
    errors.append(abs(s2.primal_objective - 1.0))
    cfg = sdp.SolverConfig()
    kkt_ok = True
    problems = [p1, p2]
    for k in range(10):
        inst = _scene(40, 2.0, 9, k)
        problems.append(SdpProblem.from_qcqp(build_qcqp(inst.pairs, list(Variant)[k % 4])))
    for prob in problems:
        sol = sdp.solve(prob)
        if sol.status is SolverStatus.OPTIMAL:
            p, d, g = kkt_residuals(prob, sol)
            _, b = prob.dense_constraints()
            c_scale = max(1.0, np.linalg.norm(prob.cost))
            kkt_ok &= p <= cfg.feas_tol * (1 + np.max(np.abs(b)))
            kkt_ok &= d <= 2 * cfg.feas_tol * c_scale
            kkt_ok &= g <= cfg.gap_tol * c_scale * (1 + abs(sol.primal_objective) / c_scale)
    a, b = sdp.solve(problems[-1]), sdp.solve(problems[-1])
    deterministic = a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    ok = max(errors) < 1e-10 and kkt_ok and deterministic
    report(9, ok, f"d=2 objective error {max(errors):.1e}, KKT {'ok' if kkt_ok else 'violated'}, deterministic {deterministic}")


def _medians(sizes, trials):
    out = {}
    for n in sizes:
        errs = {v: [] for v in (Variant.C2P, Variant.C2P_FAST)}
        for k in range(trials):
            inst = _scene(n, 1.0, 10, n, k, magnitude=None)
            for v in errs:
                # the raw relaxation read-out; the local polish maps both variants to the same optimum
                errs[v].append(pose_errors(inst.ground_truth, solve_c2p(inst.pairs, v, refine=False).pose))
        out[n] = {v: np.median(e, axis=0) for v, e in errs.items()}
    return out


def test_criterion_10_accuracy_regimes():
    r1 = _medians((12, 20, 30), 200)
    r2 = _medians((100, 1000), 200)
    r1_ok = all(np.all(m[Variant.C2P] <= m[Variant.C2P_FAST]) for m in r1.values())
    r2_dev = max(np.max(np.abs(m[Variant.C2P_FAST] / m[Variant.C2P] - 1)) for m in r2.values())
    detail = "; ".join(
        f"n={n} rot {m[Variant.C2P][0]:.4f}/{m[Variant.C2P_FAST][0]:.4f}" for n, m in {**r1, **r2}.items()
    )
    report(10, r1_ok and r2_dev < 0.1, f"R1 C2P<=FAST {r1_ok}, R2 max deviation {100 * r2_dev:.1f}% ({detail})")
