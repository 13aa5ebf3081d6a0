import numpy as np
import pytest

from fermikit.counterterm import (
    HARTREE_SPIN_WEIGHT,
    CountertermError,
    FockCounterterm,
    ScaleCutoff,
    ScaleResolvedFock,
    SyntheticCounterterm,
    fock_counterterm,
    lipschitz_probe,
    scale_ledger,
    shell_volume,
    shell_volume_slope,
    single_scale_counterterm,
    synthetic_counterterm,
    volume_exponent_fit,
    volume_improvement,
)
from fermikit.dispersion import SumDispersion, TrigField
from fermikit.geometry import trace_surface
from fermikit.interaction import InteractionModel


# ---------------------------------------------------------------------------
# Exact-diagonalization oracle: a spin-1/2 ring with density-density
# interaction, in the occupation-number basis.  This pins the spin weight of
# the tadpole term: the first-order shift of a single-particle excitation is
#
#   (1/L) [ v(0) * N_total  -  sum_{q occupied, same spin} v(k - q) ]
#
# i.e. Hartree weight 2 (both spins) and exchange weight 1.
# ---------------------------------------------------------------------------

L_SITES = 4


def _mode(site, spin):
    return site + spin * L_SITES


def _apply_creation(amplitudes, mode):
    """c^dag_mode on a dict {bitstring: amplitude} with fermionic signs."""
    out = {}
    for bits, amp in amplitudes.items():
        if bits >> mode & 1:
            continue
        sign = (-1) ** bin(bits & ((1 << mode) - 1)).count("1")
        out[bits | (1 << mode)] = out.get(bits | (1 << mode), 0.0) + sign * amp
    return out


def _momentum_orbital_state(occupied):
    """Slater state with momentum orbitals occupied: [(k_index, spin), ...]."""
    state = {0: 1.0 + 0.0j}
    for k_idx, spin in occupied:
        new = {}
        k = 2.0 * np.pi * k_idx / L_SITES
        for site in range(L_SITES):
            phase = np.exp(1j * k * site) / np.sqrt(L_SITES)
            for bits, amp in _apply_creation(state, _mode(site, spin)).items():
                new[bits] = new.get(bits, 0.0) + phase * amp
        state = new
    return state


def _interaction_diagonal(bits, u0, u1):
    up = bits & ((1 << L_SITES) - 1)
    dn = bits >> L_SITES
    val = 0.0
    for x in range(L_SITES):
        nup = up >> x & 1
        ndn = dn >> x & 1
        val += u0 * nup * ndn
        nx = nup + ndn
        y = (x + 1) % L_SITES
        ny = (up >> y & 1) + (dn >> y & 1)
        val += u1 * nx * ny
    return val


def _expectation_hint(state, u0, u1):
    norm = sum(abs(a) ** 2 for a in state.values())
    val = sum(abs(a) ** 2 * _interaction_diagonal(b, u0, u1) for b, a in state.items())
    return val / norm


def _v_hat(q, u0, u1):
    return u0 + 2.0 * u1 * np.cos(q)


class TestHartreeWeightOracle:
    U0, U1 = 0.8, 0.3

    def first_order_shift(self, k_idx):
        sea = [(0, 0), (0, 1)]  # k = 0 for both spins
        psi0 = _momentum_orbital_state(sea)
        psi1 = _momentum_orbital_state(sea + [(k_idx, 0)])
        return _expectation_hint(psi1, self.U0, self.U1) - _expectation_hint(
            psi0, self.U0, self.U1
        )

    @pytest.mark.parametrize("k_idx", [1, 2, 3])
    def test_spin_weight_two_matches_exactly(self, k_idx):
        k = 2.0 * np.pi * k_idx / L_SITES
        exact = self.first_order_shift(k_idx)
        n_total = 2  # both spins occupy k = 0
        hartree = _v_hat(0.0, self.U0, self.U1) * n_total / L_SITES
        exchange = _v_hat(k - 0.0, self.U0, self.U1) / L_SITES
        assert exact == pytest.approx(hartree - exchange, abs=1e-12)

    def test_spin_weight_one_is_wrong(self):
        k = np.pi
        exact = self.first_order_shift(2)
        wrong = (_v_hat(0.0, self.U0, self.U1) * 1 - _v_hat(k, self.U0, self.U1)) / L_SITES
        assert abs(exact - wrong) > 0.2  # off by v(0)/L

    def test_adiabatic_ed_derivative(self):
        """Full diagonalization at small coupling reproduces the same shift."""
        lam = 1e-6
        sea = [(0, 0), (0, 1)]
        shifts = {}
        for occ, label in ((sea, "ground"), (sea + [(1, 0)], "excited")):
            target = _momentum_orbital_state(occ)
            n_up = sum(1 for _, s in occ if s == 0)
            n_dn = sum(1 for _, s in occ if s == 1)
            basis = [
                b
                for b in range(1 << (2 * L_SITES))
                if bin(b & ((1 << L_SITES) - 1)).count("1") == n_up
                and bin(b >> L_SITES).count("1") == n_dn
            ]
            index = {b: i for i, b in enumerate(basis)}
            dim = len(basis)
            h = np.zeros((dim, dim), dtype=complex)
            for i, bits in enumerate(basis):
                h[i, i] = lam * _interaction_diagonal(bits, self.U0, self.U1)
                for spin in range(2):
                    for x in range(L_SITES):
                        y = (x + 1) % L_SITES
                        for a, b in ((x, y), (y, x)):
                            ma, mb = _mode(a, spin), _mode(b, spin)
                            if bits >> mb & 1 and not bits >> ma & 1:
                                inter = bits & ~(1 << mb)
                                sign = (-1) ** bin(bits & ((1 << mb) - 1)).count("1")
                                sign *= (-1) ** bin(inter & ((1 << ma) - 1)).count("1")
                                h[index[inter | (1 << ma)], i] += -1.0 * sign
            vec = np.zeros(dim, dtype=complex)
            for bits, amp in target.items():
                vec[index[bits]] = amp
            vec /= np.linalg.norm(vec)
            evals, evecs = np.linalg.eigh(h)
            overlap = np.abs(evecs.conj().T @ vec)
            shifts[label] = evals[np.argmax(overlap)]
        delta = (shifts["excited"] - shifts["ground"]).real
        free = -2.0 * np.cos(2 * np.pi / L_SITES)  # epsilon at the added momentum
        first_order = (delta - free) / lam
        k = 2.0 * np.pi / L_SITES
        expected = (_v_hat(0.0, self.U0, self.U1) * 2 - _v_hat(k, self.U0, self.U1)) / L_SITES
        assert first_order == pytest.approx(expected, rel=1e-3)


# ---------------------------------------------------------------------------
# Fock counterterm
# ---------------------------------------------------------------------------


class TestFock:
    def test_constant_interaction_gives_hartree_sea(self, circle):
        """For constant v the exchange equals v * n_e, leaving (w_H - 1) v n_e."""
        table = trace_surface(circle, mtheta=128)
        v = InteractionModel(family="constant", constant=0.5)
        field = fock_counterterm(circle, v, 0.01, table=table)
        expected = 0.01 * (HARTREE_SPIN_WEIGHT - 1.0) * 0.5 * table.sea_volume_fraction()
        assert np.max(np.abs(field.values - expected)) < 1e-12
        assert field.metadata["hartree_spin_weight"] == 2.0

    def test_sea_volume_is_quarter_pi_fraction(self, circle):
        table = trace_surface(circle, mtheta=128)
        assert table.sea_volume_fraction() == pytest.approx(np.pi / (2 * np.pi) ** 2, rel=1e-12)

    def test_cosine_interaction_theta_dependence(self, circle, cosine_interaction):
        table = trace_surface(circle, mtheta=128)
        model = FockCounterterm(v=cosine_interaction, lam=0.01)
        vals = model.surface_values(circle, table)
        assert np.max(vals) - np.min(vals) > 1e-5  # genuinely theta-dependent
        half = len(vals) // 2
        assert np.max(np.abs(vals - np.roll(vals, half))) < 1e-10  # K(-p) = K(p)

    def test_linear_in_coupling(self, circle, cosine_interaction):
        table = trace_surface(circle, mtheta=64)
        v1 = FockCounterterm(v=cosine_interaction, lam=0.01).surface_values(circle, table)
        v2 = FockCounterterm(v=cosine_interaction, lam=0.02).surface_values(circle, table)
        assert np.array_equal(v2, 2.0 * v1)
        v0 = FockCounterterm(v=cosine_interaction, lam=0.0).surface_values(circle, table)
        assert np.all(v0 == 0.0)

    def test_ray_constancy_exact(self, circle, cosine_interaction):
        field = fock_counterterm(circle, cosine_interaction, 0.01)
        assert np.max(np.abs(np.diff(field.values, axis=0))) == 0.0

    def test_requires_instantaneous(self, circle):
        v = InteractionModel(
            family="p0-decaying",
            spatial_field=TrigField([(1, 0, 0.1, "cos")]),
            decay_field=TrigField([(0, 1, 0.1, "cos")]),
        )
        with pytest.raises(CountertermError, match="instantaneous"):
            FockCounterterm(v=v, lam=0.01)


# ---------------------------------------------------------------------------
# Scale cutoff and single-scale counterterms
# ---------------------------------------------------------------------------


class TestScaleCutoff:
    def test_partition_of_unity_on_shell(self):
        cut = ScaleCutoff(M=2.0, j_min=-12, j_max=0)
        rng = np.random.default_rng(7)
        lo, hi = cut.partition_shell()
        x = np.exp(rng.uniform(np.log(lo), np.log(hi), 1000))
        total = sum(cut.chi_abs(j, x) for j in cut.scales)
        assert np.max(np.abs(total - 1.0)) <= 1e-10

    def test_support_is_exact(self):
        cut = ScaleCutoff(M=2.0, j_min=-12, j_max=0)
        for j in (-1, -4, -9):
            lo, hi = cut.support_bounds(j)
            below = np.linspace(1e-12, lo * 0.999, 50)
            above = np.linspace(hi * 1.001, hi * 10, 50)
            assert np.all(cut.chi_abs(j, below) == 0.0)
            assert np.all(cut.chi_abs(j, above) == 0.0)
            inside = np.sqrt(lo * hi)
            assert cut.chi_abs(j, inside) > 0.0

    def test_chi_combines_frequency_and_energy(self, circle):
        cut = ScaleCutoff()
        p = np.array([[1.2, 0.0]])
        ev = circle.value(p)
        assert cut.chi(-1, 0.0, ev) == pytest.approx(cut.chi_abs(-1, abs(ev[0])))


@pytest.fixture(scope="module")
def scale_setup(request):
    circle = request.getfixturevalue("circle")
    v = request.getfixturevalue("cosine_interaction")
    table = trace_surface(circle, mtheta=128)
    cutoff = ScaleCutoff(M=2.0, j_min=-10, j_max=0)
    model = ScaleResolvedFock(v=v, lam=0.01, cutoff=cutoff)
    return circle, v, table, cutoff, model


class TestSingleScale:
    def test_scale_sum_collapses_to_fock(self, scale_setup):
        circle, v, table, cutoff, model = scale_setup
        total = model.slice_surface_values(circle, table, 0, complete_top=True)
        for j in range(cutoff.j_min, 0):
            total = total + model.slice_surface_values(circle, table, j)
        fock = FockCounterterm(v=v, lam=0.01).surface_values(circle, table)
        assert np.max(np.abs(total - fock)) <= 1e-4

    def test_scale_decay_slope(self, scale_setup):
        circle, v, table, cutoff, model = scale_setup
        ledger = scale_ledger(model, circle, range(-8, 0), table=table)
        assert ledger.gamma_fit >= 0.2
        assert ledger.gamma_fit <= 3.5  # sane upper bound: naive power counting

    def test_coupling_doubles_every_scale(self, scale_setup):
        circle, v, table, cutoff, model = scale_setup
        a = model.slice_surface_values(circle, table, -3)
        b = model.with_coupling(0.02).slice_surface_values(circle, table, -3)
        assert np.allclose(b, 2.0 * a, rtol=0, atol=1e-18)

    def test_zero_coupling_kills_slices(self, scale_setup):
        circle, v, table, cutoff, _ = scale_setup
        field = single_scale_counterterm(circle, v, 0.0, -4, cutoff=cutoff, table=table)
        assert np.all(field.values == 0.0)

    def test_out_of_range_scale(self, scale_setup):
        circle, v, table, cutoff, model = scale_setup
        with pytest.raises(CountertermError, match="out of cutoff range"):
            model.slice_surface_values(circle, table, -99)

    def test_ledger_requires_scale_resolved(self, circle, cosine_interaction):
        model = FockCounterterm(v=cosine_interaction, lam=0.01)
        with pytest.raises(CountertermError, match="scale-resolved"):
            scale_ledger(model, circle, range(-5, 0))

    def test_flat_ledger_fits_to_zero(self, circle):
        model = SyntheticCounterterm(lam=0.01, shape=TrigField([(1, 0, 0.5, "cos")]))
        table = trace_surface(circle, mtheta=64)
        ledger = scale_ledger(model, circle, range(-6, 0), table=table)
        assert abs(ledger.gamma_fit) < 1e-10


# ---------------------------------------------------------------------------
# Synthetic counterterm and Lipschitz probes
# ---------------------------------------------------------------------------


class TestSynthetic:
    def test_unit_shape_gives_lambda(self, circle):
        field = synthetic_counterterm(circle, 0.37)
        assert np.all(field.values == 0.37)

    def test_identical_dispersions_give_zero_difference(self, circle):
        model = SyntheticCounterterm(lam=0.1, shape=TrigField([(1, 0, 0.8, "cos")]))
        table = trace_surface(circle, mtheta=64)
        a = model.surface_values(circle, table)
        b = model.surface_values(circle, table)
        assert np.array_equal(a, b)

    def test_lipschitz_quotient_below_constant(self, circle):
        shape = TrigField([(1, 0, 0.7, "cos"), (0, 1, 0.3, "cos")])
        model = SyntheticCounterterm(lam=0.1, shape=shape)
        table = trace_surface(circle, mtheta=64)
        lip = model.lipschitz_constant(circle, table) * 0.1
        rng = np.random.default_rng(8)
        for _ in range(12):
            amp = 10.0 ** rng.uniform(-4, -1.5)
            bump = TrigField([(1, 0, rng.normal(), "cos"), (0, 1, rng.normal(), "cos")])
            e1 = SumDispersion(circle, bump.scaled(amp))
            rep = lipschitz_probe(model, circle, e1, mtheta=64)
            assert rep.quotient0 <= lip * 1.05 + 1e-12


class TestFockLipschitz:
    def test_quotient_bounded_and_linear_in_lambda(self, circle, cosine_interaction):
        rng = np.random.default_rng(9)
        model = FockCounterterm(v=cosine_interaction, lam=0.01)
        quotients = []
        for amp in np.exp(np.linspace(np.log(1e-4), np.log(1e-1), 8)):
            w = rng.normal(size=3)
            w /= np.max(np.abs(w))
            bump = TrigField(
                [(1, 0, w[0], "cos"), (0, 1, w[1], "cos"), (1, 1, w[2], "cos")]
            ).scaled(float(amp))
            e1 = SumDispersion(circle, bump)
            rep = lipschitz_probe(model, circle, e1, mtheta=64)
            quotients.append(rep.quotient0)
            rep2 = lipschitz_probe(model.with_coupling(0.02), circle, e1, mtheta=64)
            assert rep2.quotient0 == pytest.approx(2.0 * rep.quotient0, rel=1e-12)
        quotients = np.array(quotients)
        assert np.all(quotients > 0.0)
        assert np.max(quotients) / np.min(quotients) <= 10.0

    def test_equal_dispersions_zero_quotients(self, circle, cosine_interaction):
        model = FockCounterterm(v=cosine_interaction, lam=0.01)
        rep = lipschitz_probe(model, circle, circle, mtheta=64)
        assert rep.quotient0 == 0.0 and rep.quotient1 == 0.0 and rep.quotient2 == 0.0


# ---------------------------------------------------------------------------
# Volume improvement
# ---------------------------------------------------------------------------


class TestVolumeImprovement:
    def test_saturated_indicator_factorizes(self, circle):
        table = trace_surface(circle, mtheta=512)
        eps3 = 2.0 * 3.0  # beyond any |e| value
        est = volume_improvement(circle, 0.05, 0.05, eps3, samples=20_000, seed=0, table=table)
        assert est.hits == est.samples
        assert est.value == pytest.approx(est.shell1_volume * est.shell2_volume, rel=1e-9)

    def test_shell_volume_coarea(self, circle):
        # circle: U(eps) = {r^2/2 - mu in [-eps, eps]} has measure 4 pi eps exactly
        table = trace_surface(circle, mtheta=512)
        for eps in (0.02, 0.05, 0.1):
            assert shell_volume(circle, eps, table) == pytest.approx(4 * np.pi * eps, rel=1e-9)

    def test_shell_volume_slope_near_one(self, circle):
        slope = shell_volume_slope(circle, [0.2, 0.1, 0.05, 0.025])
        assert slope == pytest.approx(1.0, abs=0.1)

    def test_exponent_fit_positive(self, circle):
        slope, ests = volume_exponent_fit(
            circle, 0.05, [0.4, 0.2, 0.1, 0.05], samples=100_000, seed=1
        )
        vals = [e.value for e in ests]
        assert all(a > b for a, b in zip(vals, vals[1:]))  # decreasing in eps3
        assert slope > 0.3
        for e in ests:
            assert e.std_error / e.value < 0.2

    def test_improper_shell_rejected(self, circle):
        with pytest.raises(CountertermError, match="shell"):
            volume_improvement(circle, 5.0, 5.0, 0.1, samples=100)
