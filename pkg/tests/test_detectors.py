import math
import unittest

import numpy as np
from numpy import testing as npt
from scipy import optimize

from ncp_detect import detectors
from ncp_detect import errors
from ncp_detect import scenario

# 10**4 instances spread over N in (2, 4, 8) and H in (3, 21)
INSTANCES_PER_SHAPE = 1667


def _random_cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(
        2.0
    )


def _whitened(rng, n, h_total, jammer=10.0):
    """Whitened data with identity whitener and a strong rank-one jammer."""
    v0 = scenario.steering_vector(0.0, n)
    direction = scenario.steering_vector(0.7, n)
    amplitudes = jammer * _random_cn(rng, h_total)
    x = _random_cn(rng, n, h_total) + np.outer(direction, amplitudes)
    x[:, 0] += 2.0 * v0
    return detectors.WhitenedData(
        x_cut=x[:, 0], x_omega=x[:, 1:], v0=v0, whitener=np.eye(n), v=v0
    )


def _amf_instance(rng, n):
    """Random CUT, neighbours, training data and steering vector."""
    secondary = _random_cn(rng, n, 2 * n)
    dataset = scenario.Dataset(
        z_cut=_random_cn(rng, n),
        z_omega=_random_cn(rng, n, 4),
        r_secondary=secondary,
    )
    v = scenario.steering_vector(rng.uniform(-1.0, 1.0), n)
    return dataset, v, detectors.sample_covariance(secondary)


def _small_trial(seed, scnr_db=10.0):
    cfg = scenario.ScenarioConfig(n_antennas=2, k_secondary=4, h_left=1, h_right=1)
    rng = np.random.default_rng(seed)
    dataset = scenario.synthesize_dataset(cfg, 'H1', rng, scnr_db=scnr_db)
    v = scenario.steering_vector(0.0, 2)
    m_hat = detectors.sample_covariance(dataset.r_secondary)
    return detectors.whiten(m_hat, dataset, v)


def _top_eigenvalue_2x2(a, d, b):
    return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)


def _rank_one_gain(lam, h_total):
    lam = np.asarray(lam, dtype=float)
    gain = h_total * np.log(h_total / np.maximum(lam, h_total)) + lam - h_total
    return np.where(lam > h_total, gain, 0.0)


def _rncp_oracle(whitened):
    """Exhaustive search over the target amplitude for N = 2.

    Jammer power and direction are maximized in closed form for every
    candidate amplitude on a grid, and the best grid point is polished.
    """
    x, v0, s = whitened.x_cut, whitened.v0, whitened.s_omega
    h_total = whitened.h_total
    trace_s = np.trace(s).real
    s_top = np.linalg.eigvalsh(s)[-1]

    def concentrated(alpha):
        x_alpha = x[:, None] - np.outer(v0, alpha)
        energy = np.sum(np.abs(x_alpha) ** 2, axis=0)
        lam = _top_eigenvalue_2x2(
            s[0, 0].real + np.abs(x_alpha[0]) ** 2,
            s[1, 1].real + np.abs(x_alpha[1]) ** 2,
            s[0, 1] + x_alpha[0] * np.conj(x_alpha[1]),
        )
        return -energy - trace_s + _rank_one_gain(lam, h_total)

    gain = np.vdot(v0, v0).real
    centre = np.vdot(v0, x) / gain
    radius = 3.0 * (np.linalg.norm(x) + math.sqrt(s_top)) / math.sqrt(gain) + 1.0
    axis = np.linspace(-radius, radius, 401)
    grid = (centre + axis[:, None] + 1j * axis[None, :]).ravel()
    values = concentrated(grid)
    best = grid[np.argmax(values)]
    result = optimize.minimize(
        lambda p: -concentrated(np.array([p[0] + 1j * p[1]]))[0],
        [best.real, best.imag],
        method='Nelder-Mead',
        options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 10000},
    )
    return max(-result.fun, values.max()) - detectors.rncp_h0_core(whitened.x_all)


def _dncp_oracle(whitened):
    """Exhaustive search over the jammer direction for N = 2.

    Amplitudes are minimized in closed form for every candidate direction
    ``[cos t, sin t exp(j phi)]`` on a grid, and the best point is polished.
    """
    x, x_omega, v0 = whitened.x_cut, whitened.x_omega, whitened.v0
    projector = np.eye(2) - np.outer(v0, v0.conj()) / np.vdot(v0, v0).real
    px = projector @ x
    energy_omega = np.sum(np.abs(x_omega) ** 2)

    def residual(t, phi):
        u = np.stack([np.cos(t) + 0j, np.sin(t) * np.exp(1j * phi)])
        pu = projector @ u
        cut = np.vdot(px, px).real - np.abs(pu.conj().T @ x) ** 2 / np.sum(
            np.abs(pu) ** 2, axis=0
        )
        omega = energy_omega - np.sum(np.abs(u.conj().T @ x_omega) ** 2, axis=1)
        return cut + omega

    t = np.linspace(1e-4, math.pi / 2 - 1e-4, 401)
    phi = np.linspace(0.0, 2 * math.pi, 401, endpoint=False) + 1e-3
    tt, pp = np.meshgrid(t, phi)
    values = residual(tt.ravel(), pp.ravel())
    finite = np.isfinite(values)
    index = np.argmin(np.where(finite, values, np.inf))
    result = optimize.minimize(
        lambda p: residual(np.array([p[0]]), np.array([p[1]]))[0],
        [tt.ravel()[index], pp.ravel()[index]],
        method='Nelder-Mead',
        options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 10000},
    )
    best = min(result.fun, values[index])
    return -best - detectors.dncp_h0_core(whitened.x_all)



def _best_unit_quadratic(scatter):
    """Largest ``u^H S u`` over unit ``u = [cos t, sin t exp(j phi)]``, N = 2."""

    def quadratic(t, phi):
        u = np.stack([np.cos(t) + 0j, np.sin(t) * np.exp(1j * phi)])
        return np.einsum('ik,ij,jk->k', u.conj(), scatter, u).real

    t = np.linspace(0.0, math.pi / 2, 401)
    phi = np.linspace(0.0, 2 * math.pi, 401, endpoint=False)
    tt, pp = np.meshgrid(t, phi)
    values = quadratic(tt.ravel(), pp.ravel())
    index = np.argmax(values)
    result = optimize.minimize(
        lambda p: -quadratic(np.array([p[0]]), np.array([p[1]]))[0],
        [tt.ravel()[index], pp.ravel()[index]],
        method='Nelder-Mead',
        options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 10000},
    )
    return max(-result.fun, values[index])


class SampleCovarianceTestCase(unittest.TestCase):
    def test_identity(self):
        npt.assert_allclose(
            detectors.sample_covariance(np.eye(4)).matrix, np.eye(4) / 4.0
        )

    def test_single_antenna(self):
        c = 1.5 - 2.0j
        m_hat = detectors.sample_covariance(np.array([[c, c]]))
        self.assertAlmostEqual(m_hat.matrix[0, 0].real, abs(c) ** 2)

    def test_equal_columns(self):
        """A rank-one estimate cannot whiten the data."""
        c = np.array([1.0, 1j])
        with self.assertRaises(errors.DegenerateTrainingError):
            detectors.sample_covariance(np.column_stack([c, c]))

    def test_too_few_vectors(self):
        with self.assertRaises(errors.DegenerateTrainingError):
            detectors.sample_covariance(np.ones((4, 3)))

    def test_consistency(self):
        m = scenario.clutter_covariance(scenario.ScenarioConfig())
        r = scenario.sample_cn(
            np.zeros(8), m, np.random.default_rng(2), size=100_000
        )
        m_hat = detectors.sample_covariance(r).matrix
        self.assertTrue(np.all(np.abs(m_hat - m.matrix) <= 0.05 * np.abs(m.matrix)))


class WhitenTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(8)
        self.dataset = scenario.Dataset(
            z_cut=_random_cn(rng, 2),
            z_omega=_random_cn(rng, 2, 3),
            r_secondary=_random_cn(rng, 2, 4),
        )
        self.v = scenario.steering_vector(0.0, 2)

    def test_identity(self):
        whitened = detectors.whiten(np.eye(2), self.dataset, self.v)
        npt.assert_allclose(whitened.x_cut, self.dataset.z_cut)
        npt.assert_allclose(whitened.x_omega, self.dataset.z_omega)

    def test_diagonal(self):
        for method in detectors.WHITEN_METHODS:
            whitened = detectors.whiten(
                np.diag([4.0, 9.0]), self.dataset, self.v, method=method
            )
            npt.assert_allclose(whitened.whitener, np.diag([0.5, 1.0 / 3.0]))

    def test_whitening_residual(self):
        m = scenario.clutter_covariance(scenario.ScenarioConfig()).matrix
        dataset = scenario.Dataset(
            z_cut=np.zeros(8), z_omega=np.zeros((8, 2)), r_secondary=np.zeros((8, 8))
        )
        v = scenario.steering_vector(0.0, 8)
        for method in detectors.WHITEN_METHODS:
            w = detectors.whiten(m, dataset, v, method=method).whitener
            npt.assert_allclose(w @ m @ w.conj().T, np.eye(8), atol=1e-8)

    def test_color_inverts(self):
        whitened = detectors.whiten(np.diag([4.0, 9.0]), self.dataset, self.v)
        u = np.array([1.0, 2.0j])
        npt.assert_allclose(whitened.whitener @ whitened.color(u), u)

    def test_unknown_method(self):
        with self.assertRaises(errors.InvalidArgumentError):
            detectors.whiten(np.eye(2), self.dataset, self.v, method='svd')

    def test_not_positive_definite(self):
        with self.assertRaises(errors.NumericError):
            detectors.whiten(np.diag([1.0, 0.0]), self.dataset, self.v)


class MatrixIdentityTestCase(unittest.TestCase):
    """Rank-one update identities behind the compressed likelihoods."""

    def setUp(self):
        cfg = scenario.ScenarioConfig()
        self.m = scenario.clutter_covariance(cfg).matrix
        self.q = scenario.jammer_signature(cfg, cfg.jammer_azimuth)
        self.z = _random_cn(np.random.default_rng(4), 8, 21)
        dataset = scenario.Dataset(
            z_cut=self.z[:, 0], z_omega=self.z[:, 1:], r_secondary=np.zeros((8, 8))
        )
        self.whitened = detectors.whiten(
            self.m, dataset, scenario.steering_vector(0.0, 8), method='sqrtm'
        )
        self.u = self.whitened.whitener @ self.q

    def test_determinant(self):
        _, logdet = np.linalg.slogdet(self.m + np.outer(self.q, self.q.conj()))
        _, logdet_m = np.linalg.slogdet(self.m)
        expected = logdet_m + math.log1p(np.vdot(self.u, self.u).real)
        self.assertAlmostEqual(logdet / expected, 1.0, places=8)

    def test_trace(self):
        sigma = self.m + np.outer(self.q, self.q.conj())
        direct = np.trace(np.linalg.solve(sigma, self.z @ self.z.conj().T)).real
        x = self.whitened.x_all
        scatter = x @ x.conj().T
        power = np.vdot(self.u, self.u).real
        reduced = np.trace(scatter).real - np.vdot(
            self.u, scatter @ self.u
        ).real / (1.0 + power)
        self.assertAlmostEqual(direct / reduced, 1.0, places=8)


class LeadingEigenpairTestCase(unittest.TestCase):
    def test_phase(self):
        rng = np.random.default_rng(9)
        a = _random_cn(rng, 4, 4)
        a = a @ a.conj().T
        lam, vector = detectors.leading_eigenpair(a)
        npt.assert_allclose(a @ vector, lam * vector, atol=1e-10)
        self.assertAlmostEqual(np.linalg.norm(vector), 1.0)
        self.assertAlmostEqual(vector[0].imag, 0.0, places=14)
        self.assertGreater(vector[0].real, 0.0)


class RncpCoreTestCase(unittest.TestCase):
    """Validate the R-NCP-D building blocks."""

    def test_h0_core_boundary(self):
        x = np.zeros((3, 4), dtype=complex)
        x[0, 0] = 2.0
        self.assertAlmostEqual(detectors.rncp_h0_core(x), -4.0)

    def test_h0_core_scalar(self):
        x = np.array([[math.sqrt(6.0), 0.0]])
        self.assertAlmostEqual(
            detectors.rncp_h0_core(x), -6.0 + 2.0 * math.log(1.0 / 3.0) + 4.0
        )

    def test_h0_core_search(self):
        """The closed form matches a numerical search over power and direction."""
        rng = np.random.default_rng(21)
        direction = scenario.steering_vector(0.4, 4)
        x = _random_cn(rng, 4, 3) + np.outer(direction, 3.0 * _random_cn(rng, 3))
        scatter = x @ x.conj().T
        energy = np.trace(scatter).real

        def negative(params):
            u = params[:4] + 1j * params[4:8]
            u0 = u / np.linalg.norm(u)
            p = params[8]
            quad = np.vdot(u0, scatter @ u0).real
            return 3 * math.log1p(p) - p / (1 + p) * quad + energy

        best = -math.inf
        for _ in range(20):
            start = np.concatenate([rng.standard_normal(8), [rng.uniform(0, 10)]])
            result = optimize.minimize(
                negative,
                start,
                method='L-BFGS-B',
                bounds=[(None, None)] * 8 + [(0.0, 1e6)],
            )
            best = max(best, -result.fun)
        core = detectors.rncp_h0_core(x)
        self.assertLessEqual(abs(best - core), 1e-3 * abs(core))

    def test_h0_core_exhaustive_search(self):
        for seed in range(100):
            x = _small_trial(seed).x_all
            scatter = x @ x.conj().T
            best = -np.trace(scatter).real + float(
                _rank_one_gain(_best_unit_quadratic(scatter), x.shape[1])
            )
            core = detectors.rncp_h0_core(x)
            self.assertLessEqual(abs(best - core), 1e-3 * max(abs(core), 1.0))

    def test_alpha_update_without_jammer(self):
        rng = np.random.default_rng(3)
        x, v0, u0 = _random_cn(rng, 4), _random_cn(rng, 4), _random_cn(rng, 4)
        u0 /= np.linalg.norm(u0)
        expected = np.vdot(v0, x) / np.vdot(v0, v0)
        self.assertAlmostEqual(detectors.rncp_alpha_update(x, v0, 0.0, u0), expected)

    def test_alpha_update_orthogonal_jammer(self):
        x = np.array([1.0 + 2j, 3.0, -1j])
        v0 = np.array([1.0, 0.0, 0.0])
        u0 = np.array([0.0, 1.0, 0.0])
        self.assertAlmostEqual(detectors.rncp_alpha_update(x, v0, 5.0, u0), 1.0 + 2j)

    def test_alpha_update_stationary(self):
        rng = np.random.default_rng(4)
        x, v0, u0 = _random_cn(rng, 4), _random_cn(rng, 4), _random_cn(rng, 4)
        u0 /= np.linalg.norm(u0)
        p = 3.0
        alpha = detectors.rncp_alpha_update(x, v0, p, u0)
        x_alpha = x - alpha * v0
        shrink = p / (1 + p)
        gradient = np.vdot(v0, x_alpha) - shrink * np.vdot(v0, u0) * np.vdot(
            u0, x_alpha
        )
        self.assertLess(abs(gradient), 1e-10)

    def test_pu_update_weak(self):
        p, u0 = detectors.rncp_pu_update(0.5 * np.eye(2), np.zeros(2), 3)
        self.assertEqual(p, 0.0)
        self.assertAlmostEqual(np.linalg.norm(u0), 1.0)

    def test_pu_update_scalar(self):
        p, u0 = detectors.rncp_pu_update(np.array([[9.0]]), np.zeros(1), 3)
        self.assertAlmostEqual(p, 2.0)
        npt.assert_allclose(u0, [1.0])

    def test_pu_update_eigenvector(self):
        rng = np.random.default_rng(5)
        x_omega = _random_cn(rng, 4, 4)
        s = x_omega @ x_omega.conj().T
        x_alpha = _random_cn(rng, 4)
        p, u0 = detectors.rncp_pu_update(s, x_alpha, 5)
        a = s + np.outer(x_alpha, x_alpha.conj())
        lam = np.linalg.eigvalsh(a)[-1]
        npt.assert_allclose(a @ u0, lam * u0, atol=1e-10)
        self.assertAlmostEqual(p, max(lam / 5 - 1, 0.0))

    def test_objective_bounds(self):
        whitened = _whitened(np.random.default_rng(6), 4, 6)
        lam = np.linalg.eigvalsh(whitened.s_omega)[-1]
        g1, g2, g3 = detectors.rncp_objective_parts(
            whitened, 0.5 - 0.2j, 2.0, scenario.steering_vector(0.3, 4)
        )
        self.assertLessEqual(g1, 0.0)
        self.assertLessEqual(g2, lam + 1e-9)
        self.assertLessEqual(g3, 0.0)


class RncpStatisticTestCase(unittest.TestCase):
    """Validate the R-NCP-D alternating maximization."""

    def test_monotone(self):
        rng = np.random.default_rng(31)
        for n in (2, 4, 8):
            for h_total in (3, 21):
                for _ in range(INSTANCES_PER_SHAPE):
                    whitened = _whitened(rng, n, h_total)
                    outcome = detectors.rncp_statistic(whitened, 10)
                    trace = outcome.objective_trace
                    slack = 1e-9 * np.maximum(np.abs(trace[:-1]), 1.0)
                    self.assertTrue(np.all(np.diff(trace) >= -slack))
                    self.assertLessEqual(
                        trace[-1], np.linalg.eigvalsh(whitened.s_omega)[-1] + 1e-9
                    )
                    for state in outcome.states:
                        self.assertGreaterEqual(state.p, 0.0)
                        self.assertAlmostEqual(np.linalg.norm(state.u0), 1.0, 12)
                    self.assertEqual(outcome.iterations_run, 10)
                    self.assertEqual(outcome.iterate_trace.shape, (10, 2))

    def test_matches_exhaustive_search(self):
        for seed in range(100):
            whitened = _small_trial(seed)
            outcome = detectors.rncp_statistic(whitened, 500)
            self.assertAlmostEqual(
                outcome.statistic, _rncp_oracle(whitened), delta=1e-2
            )

    def test_signature_scale(self):
        """The array-domain signature whitens to ``sqrt(p) u0``."""
        whitened = _small_trial(5)
        for state in detectors.rncp_statistic(whitened, 10).states:
            npt.assert_allclose(
                whitened.whitener @ state.q,
                math.sqrt(state.p) * state.u0,
                atol=1e-10 * max(1.0, math.sqrt(state.p)),
            )

    def test_early_stop(self):
        whitened = _whitened(np.random.default_rng(7), 4, 6)
        outcome = detectors.rncp_statistic(
            whitened, 500, early_stop=True, eps_q=1e-3, eps_alpha=1e-3
        )
        self.assertLess(outcome.iterations_run, 500)
        self.assertTrue(np.all(outcome.iterate_trace[-1] < 1e-3))

    def test_single_iteration(self):
        whitened = _whitened(np.random.default_rng(7), 4, 6)
        self.assertEqual(detectors.rncp_statistic(whitened, 1).iterations_run, 1)
        with self.assertRaises(errors.InvalidArgumentError):
            detectors.rncp_statistic(whitened, 0)


class DncpTestCase(unittest.TestCase):
    """Validate the D-NCP-D updates and iteration."""

    def test_h0_core_zero(self):
        self.assertEqual(detectors.dncp_h0_core(np.zeros((3, 4))), 0.0)

    def test_h0_core_rank_one(self):
        x = np.outer([1.0, 2j, -1.0], [0.5, 1.0 - 1j, 3.0])
        self.assertAlmostEqual(detectors.dncp_h0_core(x), 0.0, places=9)

    def test_h0_core_nonpositive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            self.assertLessEqual(detectors.dncp_h0_core(_random_cn(rng, 4, 5)), 0.0)

    def test_h0_core_exhaustive_search(self):
        for seed in range(100):
            x = _small_trial(seed).x_all
            scatter = x @ x.conj().T
            best = _best_unit_quadratic(scatter) - np.trace(scatter).real
            core = detectors.dncp_h0_core(x)
            self.assertLessEqual(abs(best - core), 1e-3 * max(abs(core), 1.0))

    def test_u_update_neighbours_only(self):
        rng = np.random.default_rng(2)
        x1 = _random_cn(rng, 3)
        u = detectors.dncp_u_update(
            _random_cn(rng, 3),
            x1[:, None],
            scenario.steering_vector(0.0, 3),
            0.0,
            np.array([1.0]),
        )
        npt.assert_allclose(u, x1)

    def test_u_update_singular(self):
        v0 = scenario.steering_vector(0.0, 3)
        with self.assertRaises(errors.SingularUpdateError):
            detectors.dncp_u_update(
                2.0 * v0, np.zeros((3, 1)), v0, 1.0, np.array([0.0])
            )
        with self.assertRaises(errors.SingularUpdateError):
            detectors.dncp_u_update(
                np.ones(3), np.ones((3, 2)), v0, 0.0, np.zeros(2)
            )

    def test_u_update_normal_equations(self):
        rng = np.random.default_rng(3)
        x, x_omega = _random_cn(rng, 4), _random_cn(rng, 4, 5)
        v0 = scenario.steering_vector(0.2, 4)
        beta, beta_omega = 0.7 - 0.3j, _random_cn(rng, 5)
        u = detectors.dncp_u_update(x, x_omega, v0, beta, beta_omega)
        projector = np.eye(4) - np.outer(v0, v0.conj())
        s = np.sum(np.abs(beta_omega) ** 2)
        lhs = (abs(beta) ** 2 * projector + s * np.eye(4)) @ u
        rhs = np.conj(beta) * projector @ x + x_omega @ beta_omega.conj()
        self.assertLess(np.linalg.norm(lhs - rhs), 1e-10)

    def test_beta_update_orthogonal(self):
        rng = np.random.default_rng(4)
        v0 = np.array([1.0, 0.0, 0.0])
        u = np.array([0.0, 0.6, 0.8j])
        x, x_omega = _random_cn(rng, 3), _random_cn(rng, 3, 2)
        beta, beta_omega = detectors.dncp_beta_update(u, x, x_omega, v0)
        self.assertAlmostEqual(beta, np.vdot(u, x))
        npt.assert_allclose(beta_omega, u.conj() @ x_omega)

    def test_beta_update_exact(self):
        u = np.array([0.0, 1.0, 1j])
        x_omega = np.outer(u, [2.0, -1j])
        _, beta_omega = detectors.dncp_beta_update(
            u, np.ones(3), x_omega, np.array([1.0, 0.0, 0.0])
        )
        npt.assert_allclose(beta_omega, [2.0, -1j])

    def test_beta_update_aligned(self):
        """A signature inside the target subspace leaves the CUT unexplained."""
        v0 = scenario.steering_vector(0.0, 3)
        u = 2j * v0
        beta, beta_omega = detectors.dncp_beta_update(
            u, np.ones(3), np.ones((3, 2)), v0
        )
        self.assertEqual(beta, 0j)
        npt.assert_allclose(beta_omega, u.conj() @ np.ones((3, 2)) / 4.0)

    def test_beta_update_vanished(self):
        v0 = scenario.steering_vector(0.0, 3)
        with self.assertRaises(errors.DegenerateGeometryError):
            detectors.dncp_beta_update(np.zeros(3), np.ones(3), np.ones((3, 2)), v0)

    def test_single_antenna(self):
        """With one antenna every signature is aligned with the target."""
        rng = np.random.default_rng(43)
        x = _random_cn(rng, 1, 4)
        whitened = detectors.WhitenedData(
            x_cut=x[:, 0],
            x_omega=x[:, 1:],
            v0=np.ones(1, dtype=complex),
            whitener=np.eye(1),
            v=np.ones(1, dtype=complex),
        )
        outcome = detectors.dncp_statistic(whitened, 10)
        self.assertAlmostEqual(outcome.statistic, 0.0, places=9)
        for state in outcome.states:
            self.assertEqual(state.beta, 0j)

    def test_monotone(self):
        rng = np.random.default_rng(41)
        for n in (2, 4, 8):
            for h_total in (3, 21):
                for _ in range(INSTANCES_PER_SHAPE):
                    outcome = detectors.dncp_statistic(_whitened(rng, n, h_total), 10)
                    trace = outcome.objective_trace
                    slack = 1e-9 * np.maximum(np.abs(trace[:-1]), 1.0)
                    self.assertTrue(np.all(np.diff(trace) <= slack))
                    self.assertLessEqual(outcome.iterations_run, 10)

    def test_matches_exhaustive_search(self):
        for seed in range(100):
            whitened = _small_trial(seed)
            outcome = detectors.dncp_statistic(whitened, 500)
            self.assertAlmostEqual(
                outcome.statistic, _dncp_oracle(whitened), delta=1e-2
            )


class AmfTestCase(unittest.TestCase):
    def test_matched(self):
        v = scenario.steering_vector(0.0, 4)
        self.assertAlmostEqual(detectors.amf_statistic(v, v, np.eye(4)), 1.0)

    def test_orthogonal(self):
        v = np.array([1.0, 0.0])
        self.assertAlmostEqual(
            detectors.amf_statistic(np.array([0.0, 3.0]), v, np.eye(2)), 0.0
        )

    def test_two_routes(self):
        """Both routes equal the sample-covariance AMF on random instances."""
        rng = np.random.default_rng(3)
        for index in range(1000):
            dataset, v, m_hat = _amf_instance(rng, (2, 4, 8)[index % 3])
            filtered = np.linalg.solve(m_hat.matrix, v)
            expected = abs(np.vdot(filtered, dataset.z_cut)) ** 2 / np.vdot(
                v, filtered
            ).real
            tolerance = 1e-9 * max(expected, 1.0)
            direct = detectors.amf_statistic(dataset.z_cut, v, m_hat)
            self.assertLessEqual(abs(direct - expected), tolerance)
            whitened = detectors.whiten(m_hat, dataset, v)
            h0, h1 = detectors.amf_constrained_core(whitened.x_all, whitened.v0)
            self.assertLessEqual(abs(h1 - h0 - expected), tolerance)

    def test_constrained_cores(self):
        whitened = _whitened(np.random.default_rng(12), 4, 6)
        h0, h1 = detectors.amf_constrained_core(whitened.x_all, whitened.v0)
        amf = detectors.amf_whitened_statistic(whitened)
        self.assertAlmostEqual((h1 - h0) / amf, 1.0, places=9)

    def test_ignores_neighbours(self):
        """Only the CUT enters the AMF, whatever the contaminated bins hold."""
        rng = np.random.default_rng(17)
        dataset, v, m_hat = _amf_instance(rng, 8)
        perturbed = scenario.Dataset(
            z_cut=dataset.z_cut,
            z_omega=dataset.z_omega + 30.0 * _random_cn(rng, *dataset.z_omega.shape),
            r_secondary=dataset.r_secondary,
        )
        before = detectors.whiten(m_hat, dataset, v)
        after = detectors.whiten(m_hat, perturbed, v)
        self.assertEqual(
            detectors.amf_whitened_statistic(before),
            detectors.amf_whitened_statistic(after),
        )
        h0, h1 = detectors.amf_constrained_core(before.x_all, before.v0)
        h0_after, h1_after = detectors.amf_constrained_core(after.x_all, after.v0)
        self.assertAlmostEqual(h1 - h0, h1_after - h0_after, delta=1e-9 * abs(h0_after))

    def test_orthogonal_complement(self):
        v0 = scenario.steering_vector(0.3, 5)
        basis = detectors.orthogonal_complement(v0)
        self.assertEqual(basis.shape, (5, 4))
        npt.assert_allclose(basis.conj().T @ basis, np.eye(4), atol=1e-12)
        npt.assert_allclose(basis.conj().T @ v0, np.zeros(4), atol=1e-12)

    def test_single_antenna_core(self):
        h0, h1 = detectors.amf_constrained_core(np.array([[2.0, 1.0]]), np.ones(1))
        self.assertAlmostEqual(h0, -5.0)
        self.assertAlmostEqual(h1, -1.0)


class ClairvoyantTestCase(unittest.TestCase):
    def test_no_target(self):
        v = scenario.steering_vector(0.0, 4)
        self.assertEqual(
            detectors.cd_statistic(np.ones(4), 0.0, None, np.eye(4), v), 0.0
        )

    def test_white_noise(self):
        v = scenario.steering_vector(0.0, 4)
        alpha = 2.0 - 1j
        self.assertAlmostEqual(
            detectors.cd_statistic(alpha * v, alpha, None, np.eye(4), v),
            abs(alpha) ** 2,
        )

    def test_log_likelihood_ratio(self):
        cfg = scenario.ScenarioConfig()
        m = scenario.clutter_covariance(cfg).matrix
        q = scenario.jammer_signature(cfg, cfg.jammer_azimuth)
        v = scenario.steering_vector(0.0, 8)
        z = _random_cn(np.random.default_rng(13), 8) * 10.0
        alpha = 3.0 + 1j
        sigma = m + np.outer(q, q.conj())

        def loglik(mean):
            residual = z - mean
            return -np.vdot(residual, np.linalg.solve(sigma, residual)).real

        expected = loglik(alpha * v) - loglik(np.zeros(8))
        self.assertAlmostEqual(
            detectors.cd_statistic(z, alpha, q, m, v) / expected, 1.0, places=8
        )


class WhiteningInvarianceTestCase(unittest.TestCase):
    """Statistics do not depend on the choice of whitening matrix."""

    def test_invariance(self):
        cfg = scenario.ScenarioConfig()
        v = scenario.steering_vector(0.0, 8)
        for seed in range(5):
            dataset = scenario.synthesize_dataset(
                cfg, 'H1', np.random.default_rng(seed), scnr_db=15.0
            )
            m_hat = detectors.sample_covariance(dataset.r_secondary)
            chol = detectors.whiten(m_hat, dataset, v, method='cholesky')
            sqrtm = detectors.whiten(m_hat, dataset, v, method='sqrtm')
            for statistic in (detectors.rncp_statistic, detectors.dncp_statistic):
                npt.assert_allclose(
                    statistic(chol, 10).statistic,
                    statistic(sqrtm, 10).statistic,
                    rtol=1e-8,
                    atol=1e-8,
                )
            npt.assert_allclose(
                detectors.amf_whitened_statistic(chol),
                detectors.amf_whitened_statistic(sqrtm),
                rtol=1e-8,
            )
