"""Acceptance criteria 1-8, at their stated tolerances.

Each test records its parts in ``conftest.ACCEPTANCE``; the terminal
summary prints one PASS/FAIL line per criterion.
"""

import warnings

import numpy as np
import pytest

from eaisim.experiments import (
    find_peaks, line_scan, load_scenario, localization, mode_form, mode_resonances, response_eigenvalues,
    spectrum_sweep, visibility_scan,
)
from eaisim.interferometry import (
    PartialRecoveryWarning, compare_modes, convergence_study, direct_modes, eigenvalue_clusters, measure_H,
    plateau_start, probe_matrix, recover_modes,
)
from eaisim.linalg import Backend
from eaisim.model import ghz_to_omega

import test_oracles as oracle
from conftest import ACCEPTANCE


def record(cid, part, passed, detail):
    ACCEPTANCE.setdefault(cid, []).append((part, bool(passed), detail))
    return bool(passed)


def finish(cid, first=0):
    """Fail the calling test if any part recorded since index ``first`` failed."""
    failed = [f"{p}: {d}" for p, ok, d in ACCEPTANCE[cid][first:] if not ok]
    assert not failed, "; ".join(failed)


def spectrum_peaks(sc):
    return find_peaks(spectrum_sweep(sc.system, sc.source, sc.freqs_ghz, sc.coupling, threads=4), 1e-3)


def near(values, target, tol):
    return any(abs(v - target) <= tol for v in values)


def fmt(values):
    return "[" + ", ".join(f"{v:.1f}" for v in values) + "]"


def recover(sc, f, count, backend):
    w = ghz_to_omega(f)
    probes = sc.probes.build(count)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PartialRecoveryWarning)
        H = measure_H(sc.system, w, probes, sc.coupling, backend=backend)
        return recover_modes(H, probes, sc.system, w, sc.coupling)


def test_criterion_1_two_dipole_splitting():
    peaks = [p.f_ghz for p in spectrum_peaks(load_scenario("two-dipole"))]
    record("1", "two peaks at 240/340 +/- 3",
           len(peaks) == 2 and near(peaks, 240, 3) and near(peaks, 340, 3), f"peaks {fmt(peaks)}")
    weak = spectrum_peaks(load_scenario("two-dipole-weak"))
    record("1", "weak coupling: one peak at 300 +/- 2",
           len(weak) == 1 and abs(weak[0].f_ghz - 300) <= 2, f"peaks {fmt([p.f_ghz for p in weak])}")
    width = weak[0].fwhm_ghz if weak else None
    record("1", "weak coupling: FWHM 20 +/- 2", width is not None and abs(width - 20) <= 2,
           "FWHM undefined" if width is None else f"FWHM {width:.1f}")
    finish("1")


def test_criterion_2_mode_symmetry():
    sc = load_scenario("two-dipole")
    patterns = {240.0: np.array([1, -1]) / np.sqrt(2), 340.0: np.array([1, 1]) / np.sqrt(2)}
    for f, pat in patterns.items():
        z = mode_form(direct_modes(sc.system, ghz_to_omega(f), sc.coupling))[:, 0]
        overlap = abs(np.vdot(pat, z)) / np.linalg.norm(z)
        kind = "antisymmetric" if pat[1] < 0 else "symmetric"
        record("2", f"dominant mode at {f:g} GHz {kind}", overlap > 0.99, f"overlap {overlap:.6f}")
    path = sc.scan.build()
    centre = int(np.argmin(np.abs(path.positions[:, 0])))
    low = line_scan(sc.system, path, 240.0, sc.coupling)[:, 3]
    high = line_scan(sc.system, path, 340.0, sc.coupling)[:, 3]
    # the dominant mode's share of the scan: lambda_0 |u_0^H g(x)|^2
    w240 = ghz_to_omega(240.0)
    u0 = direct_modes(sc.system, w240, sc.coupling).field_modes[:, 0]
    share = np.abs(u0.conj() @ probe_matrix(path, sc.system, w240)) ** 2
    record("2", "on-axis null at 240 GHz",
           np.argmin(low) == centre and share[centre] < 1e-3 * share.max(),
           f"scan minimum at x = {path.positions[np.argmin(low), 0]:g}, dominant-mode share on axis "
           f"{share[centre] / share.max():.1e} of its maximum, total W(0)/max {low[centre] / low.max():.3f}")
    record("2", "on-axis peak at 340 GHz", np.argmax(high) == centre,
           f"scan maximum at x = {path.positions[np.argmax(high), 0]:g}")
    finish("2")


@pytest.mark.parametrize("name,single,double", [
    ("triangle", 378, 240), ("square", 357, 289), ("octagon", 454, 390),
])
def test_criterion_3_ring_spectra(name, single, double):
    first = len(ACCEPTANCE.get("3", []))
    sc = load_scenario(name)
    found = [p.f_ghz for p in spectrum_peaks(sc)]
    record("3", f"{name} peaks {single}/{double} +/- 3", near(found, single, 3) and near(found, double, 3),
           f"{name} peaks {fmt(found)}")
    for target, size in ((single, 1), (double, 2)):
        f = min(found, key=lambda x: abs(x - target)) if found else target
        ev = response_eigenvalues(sc.system, f, sc.coupling)
        got = len(eigenvalue_clusters(ev, 1e-3)[0])
        record("3", f"{name} {size}-fold at {target}", got == size, f"{name} leading cluster {got} at {f:.1f}")
    finish("3", first)


def test_criterion_4_defect_octagon():
    sc = load_scenario("octagon-defect")
    found = [p.f_ghz for p in spectrum_peaks(sc)]
    record("4", "lines at 387 +/- 3", near(found, 387, 3), f"peaks {fmt(found)}")
    record("4", "lines at 413 +/- 3", near(found, 413, 3), f"peaks {fmt(found)}")
    f = min(found, key=lambda x: abs(x - 387))
    modes = direct_modes(sc.system, ghz_to_omega(f), sc.coupling)
    z = np.abs(mode_form(modes))[:, 0]
    ratio = z[0] / z.max()
    record("4", "defect stationary in the lower mode", ratio < 0.05, f"|p_defect|/max {ratio:.1e} at {f:.1f}")
    finish("4")


def test_criterion_5_five_chain():
    sc = load_scenario("five-chain")
    be = Backend(sc.precision_digits)
    w = ghz_to_omega(280.0)
    ref = direct_modes(sc.system, w, sc.coupling, backend=be)
    res = mode_resonances(sc.system, direct_modes(sc.system, w, sc.coupling), sc.freqs_ghz, sc.coupling, 4)
    features = [187, 239, 293, 332, 381]
    ok = all(near(res, t, 3) for t in features)
    record("5", "five features 187/239/293/332/381 +/- 3", ok, f"features {fmt(sorted(res))}")
    order = [293, 239, 332, 187, 381]
    record("5", "eigenvalue order maps to 293/239/332/187/381",
           bool(np.all(np.abs(res - order) <= 3)), f"resonances in eigenvalue order {fmt(res)}")
    positions = sc.probes.build(5).positions
    record("5", "probes at x = 1..5 mm, y = 5 mm",
           np.allclose(positions, [[x, 5, 0] for x in range(1, 6)]), "probe layout")
    rec5 = recover(sc, 280.0, 5, be)
    a5 = compare_modes(ref, rec5).max_angle
    record("5", "5 probes recover all modes", a5 < 1e-6, f"angle {a5:.1e} rad")
    a4 = compare_modes(ref, recover(sc, 280.0, 4, be)).max_angle
    record("5", "4 probes fail the subspace test", a4 >= 1e-6, f"angle {a4:.2e} rad")
    for count in (6, 7, 8):
        rec = recover(sc, 280.0, count, be)
        cmp = compare_modes(rec5, rec)
        record("5", f"{count} probes unchanged to 1e-9", cmp.max_angle < 1e-9 and cmp.eigenvalue_error < 1e-9,
               f"{count} probes: angle {cmp.max_angle:.1e}, eigenvalue {cmp.eigenvalue_error:.1e}")
    finish("5")


def test_criterion_6_eleven_chain_defect():
    sc = load_scenario("eleven-chain-defect")
    found = [p.f_ghz for p in spectrum_peaks(sc)]
    for t in (276, 323):
        record("6", f"feature at {t} +/- 3", near(found, t, 3), f"peaks {fmt(found)}")
    for t, target, name in ((276, 180.0, "antiphase"), (323, 0.0, "in phase")):
        f = min(found, key=lambda x: abs(x - t))
        z = mode_form(direct_modes(sc.system, ghz_to_omega(f), sc.coupling))[:, 0]
        rel = [np.degrees(np.angle(z[n] / z[5])) for n in (4, 6)]
        dev = max(abs((r - target + 180) % 360 - 180) for r in rel)
        record("6", f"neighbours {name} at {t}", dev <= 10, f"phases {fmt(rel)} deg at {f:.1f}")
    be = Backend(sc.precision_digits)
    for t in (276, 323):
        f = min(found, key=lambda x: abs(x - t))
        study = convergence_study(sc.system, ghz_to_omega(f), lambda S: sc.probes.build(S), 13, sc.coupling,
                                  backend=be)
        start = plateau_start(study, 1e-6)
        record("6", f"plateau at exactly 11 probes ({t} GHz)", start == 11,
               f"plateau from S = {start} at {f:.1f}")
    ref = sc.reference_probe()
    path = sc.scan.build()
    d5, d6 = sc.system.dipoles[5], sc.system.dipoles[6]
    moved = sc.system.replace(5, alpha=d6.alpha, omega0=d6.omega0, gamma=d6.gamma)
    moved = moved.replace(6, alpha=d5.alpha, omega0=d5.omega0, gamma=d5.gamma)
    p0 = visibility_scan(sc.system, path, ref, 300.0, sc.coupling)[:, 4]
    p1 = visibility_scan(moved, path, ref, 300.0, sc.coupling)[:, 4]
    shift = np.max(np.abs((p1 - p0 + 180) % 360 - 180))
    record("6", "one-site defect shift changes arg gamma > 10 deg", shift > 10, f"max shift {shift:.1f} deg")
    finish("6")


def test_criterion_7_twentyone_chain():
    sc = load_scenario("twentyone-chain")
    found = [p.f_ghz for p in spectrum_peaks(sc)]
    for t in (42, 205):
        record("7", f"resonance at {t} +/- 3", near(found, t, 3), f"peaks {fmt(found)}")
        f = min(found, key=lambda x: abs(x - t))
        ev = response_eigenvalues(sc.system, f, sc.coupling)
        record("7", f"single dominant eigenvalue at {t}", ev[0] / ev[1] > 5, f"ratio {ev[0] / ev[1]:.3g}")
    ev = response_eigenvalues(sc.system, 500.0, sc.coupling)
    gap = (ev[0] - ev[1]) / ev[0]
    record("7", "top two degenerate within 1% at 500 GHz", gap < 0.01, f"relative gap {gap:.2e}")
    modes = direct_modes(sc.system, ghz_to_omega(500.0), sc.coupling)
    ends = list(range(5)) + list(range(16, 21))
    frac = localization(modes, ends)[:2]
    record("7", "modes end-localised (>= 80% in outer 5 per end)", bool(np.all(frac >= 0.8)),
           f"fractions {frac[0]:.3f}, {frac[1]:.3f}")
    ref, path = sc.reference_probe(), sc.scan.build()
    g500 = visibility_scan(sc.system, path, ref, 500.0, sc.coupling)[:, 3].min()
    g42 = visibility_scan(sc.system, path, ref, 42.0, sc.coupling)[:, 3].min()
    record("7", "min |gamma| at 500 < 0.5 x at 42", g500 < 0.5 * g42, f"{g500:.3g} vs {g42:.3g}")
    finish("7")


def test_criterion_8_oracle_equivalences():
    for name in oracle.SCENARIOS:
        record("8", "a: fringe H vs direct", *oracle.check_fringe_vs_direct(name))
        record("8", "b: dipole sum vs quadratic form", *oracle.check_power_paths(name))
        record("8", "d: L PSD and |gamma| <= 1", *oracle.check_psd_and_visibility(name))
    record("8", "c: dyadic vs difference oracle", *oracle.check_green_oracle())
    for name in ("two-dipole", "octagon"):
        record("8", "e: recovery independent of probe dyadic", *oracle.check_dyadic_invariance(name))
    finish("8")
