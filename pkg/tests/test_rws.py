import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pspectrum.largedev import RefusalError, formalism_D, increasing_hull
from pspectrum.rws import (
    DiscreteAtoms,
    InverseCDF,
    Lacunary,
    SpecError,
    asymptotics,
    critical_p,
    sample,
    spec_from_config,
    theoretical_D,
    theoretical_spectrum,
    uniforms,
    validate_montecarlo,
)

import oracle


# sampler

def test_lacunary_counts_within_binomial_band():
    spec, J = Lacunary(0.5, 0.5), 14
    hits = total = 0
    for seed in range(100):
        t = sample(spec, J, seed)
        for j in range(10, J + 1):
            n = int(np.count_nonzero(t.levels[j]))
            target = 2.0 ** (0.5 * j)
            hits += abs(n - target) <= 3 * math.sqrt(target)
            total += 1
    assert hits / total >= 0.99


def test_marginal_frequencies_match_atom_masses():
    # pooled over seeds, per-outcome frequencies sit in 3 sigma binomial bands;
    # two atoms always overflow at scale 1, so a single atom is used
    spec = Lacunary(0.3, 0.6)
    J, seeds = 9, 40
    ok = total = 0
    for j in range(1, J + 1):
        alphas, masses = spec.atoms_at(j)
        n = seeds << j
        counts = np.zeros(alphas.size + 1)
        for seed in range(seeds):
            lev = sample(spec, J, seed).levels[j]
            for i, a in enumerate(alphas):
                counts[i] += np.count_nonzero(lev == np.exp2(-a * j))
            counts[-1] += np.count_nonzero(lev == 0)
        probs = list(masses) + [1 - masses.sum()]
        for c, q in zip(counts, probs):
            lo, hi = oracle.binomial_band(n, q)
            ok += lo <= c <= hi
            total += 1
    assert ok / total >= 0.95


def test_seed_determinism_and_counter_access():
    spec = Lacunary(0.5, 0.5)
    a, b = sample(spec, 10, 7), sample(spec, 10, 7)
    assert a == b
    assert a != sample(spec, 10, 8)
    # a node's uniform depends only on (seed, j, k), not on the depth drawn
    assert np.array_equal(sample(spec, 6, 7).levels[6], a.levels[6])
    u, _ = uniforms(7, 6)
    assert u.shape == (64,) and np.all((u >= 0) & (u < 1))


def test_root_and_signs():
    t = sample(Lacunary(0.5, 0.5), 5, 1, signs=True)
    assert t.levels[0][0] == 1.0
    assert t.signs is not None and len(t.signs) == 6
    assert sample(Lacunary(0.5, 0.5), 5, 1).signs is None


def test_eta_one_rejected():
    with pytest.raises(SpecError, match="eta"):
        Lacunary(0.5, 1.0)
    with pytest.raises(SpecError):
        Lacunary(0.5, 0.0)


def test_mass_overflow_names_scale():
    spec = DiscreteAtoms([(0.2, 0.9), (0.4, 0.95)])
    with pytest.raises(SpecError, match="scale 1"):
        sample(spec, 4, 0)
    with pytest.raises(SpecError, match="distinct"):
        DiscreteAtoms([(0.2, 0.5), (0.2, 0.6)])


def test_inverse_cdf_sampling():
    spec = InverseCDF(lambda u, j: np.where(u < 0.5, 0.25, np.inf))
    t = sample(spec, 8, 3)
    lev = t.levels[8]
    assert set(np.unique(lev)) <= {0.0, 2.0 ** -2}
    with pytest.raises(SpecError):
        asymptotics(spec)


def test_spec_from_config():
    assert spec_from_config({"family": "lacunary", "alpha": 0.5, "eta": 0.5}).to_config() == \
        {"family": "lacunary", "alpha": 0.5, "eta": 0.5}
    s = spec_from_config({"family": "atoms", "atoms": [[0.8, 0.9], [0.3, 0.2]]})
    assert s.alphas.tolist() == [0.3, 0.8]
    with pytest.raises(SpecError):
        spec_from_config({"family": "cascade"})
    with pytest.raises(SpecError, match="'eta'"):
        spec_from_config({"family": "lacunary", "alpha": 0.5})


# asymptotics

def test_lacunary_asymptotics():
    a = asymptotics(Lacunary(0.5, 0.5))
    assert a.bold_rho([0.5, 0.4])[0] == 0.5 and np.isneginf(a.bold_rho(0.4)[0])
    assert a.W == (0.5,) and a.h_min == 0.5


def test_two_atom_profile():
    a = asymptotics(DiscreteAtoms([(0.3, 0.2), (0.8, 0.9)]))
    nu = a.bold_nu([0.0, 0.3, 0.5, 0.8, 2.0])
    assert np.isneginf(nu[0]) and nu[1:].tolist() == [0.2, 0.2, 0.9, 0.9]
    assert a.h_min == 0.3
    assert a.bold_lambda is not None and a.discontinuities == (0.3, 0.8)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-40, 200), st.integers(1, 99)), min_size=1, max_size=6,
                unique_by=lambda t: t[0]))
def test_bold_nu_is_running_max_of_bold_rho(atoms):
    spec = DiscreteAtoms([(a / 100, e / 100) for a, e in atoms])
    asym = asymptotics(spec)
    grid = np.union1d(np.linspace(-1, 3, 101), asym.atom_alphas)
    rho, nu = asym.bold_rho(grid), asym.bold_nu(grid)
    hull = increasing_hull(rho)
    ok = nu >= 0
    np.testing.assert_array_equal(nu[ok], hull[ok])
    assert asym.h_min == min(asym.W) and all(r > 0 for r in asym.atom_rates)


def test_critical_p():
    assert critical_p(asymptotics(Lacunary(-0.25, 0.5))) == 2.0
    assert critical_p(asymptotics(Lacunary(0.5, 0.5))) == math.inf


# theoretical spectrum

def test_theoretical_spectrum_p2():
    ts = theoretical_spectrum(Lacunary(0.5, 0.5), 2.0)
    c = ts.curve
    assert ts.h_max == pytest.approx(1.5, abs=1e-9)
    assert c.h[0] == 0.5
    np.testing.assert_allclose(c.D, np.minimum(0.5 * (c.h + 0.5), 1.0), rtol=0, atol=1e-15)
    out = theoretical_spectrum(Lacunary(0.5, 0.5), 2.0, h_grid=[0.4, 1.6]).curve.D
    assert np.all(np.isneginf(out))


def test_theoretical_spectrum_negative_alpha():
    ts = theoretical_spectrum(Lacunary(-0.25, 0.5), 1.0)
    assert ts.h_max == pytest.approx(0.5, abs=1e-9) and ts.p0 == 2.0
    np.testing.assert_allclose(ts.curve.D, np.minimum(0.5 * (ts.curve.h + 1) / 0.75, 1.0), atol=1e-15)


def test_theoretical_spectrum_p_inf():
    ts = theoretical_spectrum(Lacunary(0.5, 0.5), math.inf)
    assert ts.h_max == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(ts.curve.D, ts.curve.h, atol=1e-15)


@pytest.mark.parametrize("p", [2.0, 5.0])
def test_refusal_at_or_beyond_p0(p):
    with pytest.raises(RefusalError, match="p0 = 2"):
        theoretical_spectrum(Lacunary(-0.25, 0.5), p)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 200), st.integers(1, 99)), min_size=1, max_size=5,
                unique_by=lambda t: t[0]),
       st.sampled_from([0.5, 1.0, 2.0, math.inf]))
def test_closed_form_equals_formalism_on_shared_grid(atoms, p):
    spec = DiscreteAtoms([(a / 100, e / 100) for a, e in atoms])
    asym = asymptotics(spec)
    s = 0.0 if math.isinf(p) else 1 / p
    if p >= critical_p(asym):
        return
    h = np.linspace(max(asym.h_min, -s + 1e-3), 3.0, 97)
    a = theoretical_D(asym, p, h)
    b = formalism_D(asym.density_arrays(), p, h).D
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("alpha,eta", [(0.5, 0.5), (0.25, 0.75), (1.0, 0.2)])
def test_p_inf_line_passes_through_atom_and_top(alpha, eta):
    asym = asymptotics(Lacunary(alpha, eta))
    D = theoretical_D(asym, math.inf, [alpha, alpha / eta])
    assert D[0] == eta and D[1] == 1.0


# Monte Carlo harness

def test_validate_empty():
    rep = validate_montecarlo(Lacunary(0.5, 0.5), 2.0, 14, 0)
    assert rep.empty and rep.gates == [] and rep.passed


def test_validate_passes_and_tight_tolerance_fails():
    spec = Lacunary(0.5, 0.5)
    tol = {"density": 0.05, "scaling": 0.1, "spectrum": 0.1, "h_max": 0.1}
    rep = validate_montecarlo(spec, 2.0, 14, 3, tol, threads=2)
    assert {g.name for g in rep.gates} == set(tol) and rep.passed
    tight = validate_montecarlo(spec, 2.0, 14, 3, {k: 1e-3 for k in tol})
    assert not tight.passed
    assert [g.deviations for g in tight.gates] == [g.deviations for g in rep.gates]
    doc = rep.to_json()
    assert doc["R"] == 3 and len(doc["gates"]) == 4
    assert "PASS" in rep.table() or "FAIL" in rep.table()


def test_validate_p0_gate_only_when_finite():
    rep = validate_montecarlo(Lacunary(0.5, 0.5), 2.0, 10, 2, {"p0": 0.05})
    assert rep.gates == []
    rep = validate_montecarlo(Lacunary(-0.25, 0.5), 1.0, 12, 2, {"p0": 0.05})
    assert rep.gates[0].name == "p0" and len(rep.theory["p0_estimates"]) == 2
