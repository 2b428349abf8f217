import math
from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError
from scipy.constants import hbar
from scipy.constants import k as k_B
from scipy.optimize import minimize_scalar

from phonontide.toolbox.exceptions import DegenerateModeError, RegimeError
from phonontide.toolbox.lattice import (SHAPE_PEAK_POSITION, SHAPE_PEAK_VALUE,
                                        BathSpec, LatticeSpec, PhononPacket,
                                        Regime, build_potential,
                                        envelope_shape,
                                        envelope_shape_derivative,
                                        equipartition_amplitude, fourier_a0,
                                        fourier_a0_quadrature,
                                        longitudinal_2d_a0,
                                        mode_deformation_amplitude,
                                        packet_envelope, packet_from_modes,
                                        phonon_mode, synthesize_packet,
                                        thermal_displacement,
                                        transverse_2d_a0, vbar0)


class TestSpecs(TestCase):
    def test_lattice_spec_from_angstrom(self):
        spec = LatticeSpec.from_angstrom(3.0, n=8, v0=10.0, ion_mass=1e-25)
        self.assertAlmostEqual(spec.a, 3e-10, delta=1e-24)

    def test_lattice_spec_rejects_invalid_values(self):
        with self.assertRaises(ValidationError):
            LatticeSpec(a=-3e-10, n=8, v0=10, ion_mass=1e-25)

        with self.assertRaises(ValidationError):
            LatticeSpec(a=3e-10, n=1, v0=10, ion_mass=1e-25)

        with self.assertRaises(ValidationError):
            LatticeSpec(a=3e-10, n=8, v0=0, ion_mass=1e-25)

    def test_bath_spec_theta_d(self):
        bath = BathSpec(temperature=300, omega_d=1e13, upsilon=1500)
        self.assertTrue(math.isclose(k_B * bath.theta_d, hbar * bath.omega_d, rel_tol=1e-15))

    def test_bath_spec_rejects_negative_temperature(self):
        with self.assertRaises(ValueError):
            BathSpec(temperature=-1, omega_d=1e13, upsilon=1500)


class TestBuildPotential(TestCase):
    def setUp(self):
        self.spec = LatticeSpec(a=3e-10, n=10, v0=10.0, ion_mass=1e-25)

    def test_site_center_and_midpoint(self):
        x, u = build_potential(self.spec)

        center = np.argmin(np.abs(x))
        self.assertEqual(x[center], 0.0)
        self.assertAlmostEqual(u[center], 10.0)

        midpoint = np.argmin(np.abs(x - self.spec.a / 2))
        self.assertAlmostEqual(u[midpoint], 0.0, places=12)

    def test_interior_periodicity(self):
        x, u = build_potential(self.spec, points_per_cell=64)
        shifted = u[64:] - u[:-64]
        self.assertLess(np.max(np.abs(shifted)), 1e-12 * self.spec.v0)

    def test_grid_extent(self):
        x, u = build_potential(self.spec, points_per_cell=32)
        self.assertEqual(len(x), 10 * 32 + 1)
        self.assertAlmostEqual(x[0], -self.spec.a / 2, delta=1e-22)
        self.assertAlmostEqual(x[-1], 9.5 * self.spec.a, delta=1e-22)

    def test_rejects_coarse_grid(self):
        with self.assertRaises(ValueError):
            build_potential(self.spec, points_per_cell=8)


class TestFourierA0(TestCase):
    def test_zero_mode(self):
        spec = LatticeSpec(a=3.0, n=8, v0=10.0, ion_mass=1.0)
        self.assertEqual(fourier_a0(spec, 0), 0)

    def test_purely_imaginary(self):
        spec = LatticeSpec(a=3.0, n=8, v0=10.0, ion_mass=1.0)
        self.assertEqual(fourier_a0(spec, 3).real, 0.0)
        self.assertGreater(fourier_a0(spec, 3).imag, 0.0)

    def test_generic_mode_matches_quadrature(self):
        spec = LatticeSpec(a=3.0, n=8, v0=10.0, ion_mass=1.0)
        closed = fourier_a0(spec, 2)
        numeric = fourier_a0_quadrature(spec, 2)
        self.assertLess(abs(closed - numeric) / abs(closed), 1e-8)

    def test_all_modes_match_quadrature(self):
        for n in (4, 8, 16, 64):
            spec = LatticeSpec(a=3e-10, n=n, v0=2.0, ion_mass=1e-25)
            for m in range(1, math.ceil(n / 2)):
                closed = fourier_a0(spec, m)
                numeric = fourier_a0_quadrature(spec, m)
                self.assertLess(abs(closed - numeric) / abs(closed), 1e-8, msg=f"n={n}, m={m}")

    def test_small_ratio_series(self):
        spec = LatticeSpec(a=3.0, n=100_000, v0=10.0, ion_mass=1.0)
        leading = 2 * 10.0 / 3.0 * np.pi / 100_000
        self.assertTrue(math.isclose(fourier_a0(spec, 1).imag, leading, rel_tol=1e-8))

    def test_out_of_range(self):
        spec = LatticeSpec(a=3.0, n=8, v0=10.0, ion_mass=1.0)
        with self.assertRaises(ValueError):
            fourier_a0(spec, 8)
        with self.assertRaises(ValueError):
            fourier_a0(spec, -1)


class TestAmplitudes(TestCase):
    def setUp(self):
        # sqrt(k_B T / m) / omega_d = 0.3 Å at 300 K
        self.ion_mass = k_B * 300 / (0.3e-10 * 1e13) ** 2
        self.spec = LatticeSpec.from_angstrom(3.0, n=16, v0=10.0, ion_mass=self.ion_mass)
        self.bath = BathSpec(temperature=300, omega_d=1e13, upsilon=1500)

    def test_displacement_scale(self):
        self.assertAlmostEqual(thermal_displacement(self.spec, self.bath), 0.3e-10, delta=1e-20)

    def test_zone_boundary_mode(self):
        amplitude = equipartition_amplitude(self.spec, self.bath, 8)
        self.assertTrue(math.isclose(amplitude, 0.3e-10, rel_tol=1e-12))

    def test_zero_mode_is_degenerate(self):
        with self.assertRaises(DegenerateModeError):
            equipartition_amplitude(self.spec, self.bath, 0)

    def test_quadrupled_temperature_doubles_amplitude(self):
        hot = BathSpec(temperature=1200, omega_d=1e13, upsilon=1500)
        for m in range(1, 9):
            ratio = equipartition_amplitude(self.spec, hot, m) / equipartition_amplitude(
                self.spec, self.bath, m
            )
            self.assertTrue(math.isclose(ratio, 2.0, rel_tol=1e-12))

    def test_phonon_mode(self):
        for m in range(1, 9):
            mode = phonon_mode(self.spec, self.bath, m)
            self.assertGreater(mode.k, 0)
            self.assertLessEqual(mode.omega_k, self.bath.omega_d)
            self.assertTrue(
                math.isclose(
                    mode.amplitude * mode.omega_k,
                    math.sqrt(k_B * 300 / self.ion_mass),
                    rel_tol=1e-12,
                )
            )

    def test_phonon_mode_above_half_zone(self):
        with self.assertRaises(ValueError):
            phonon_mode(self.spec, self.bath, 9)

    def test_vbar0_scale(self):
        # 2 * 10 V / 3 Å * 0.3 Å
        self.assertTrue(math.isclose(vbar0(self.spec, self.bath), 2.0, rel_tol=1e-12))

    def test_vbar0_square_root_scaling(self):
        values = [
            vbar0(self.spec, BathSpec(temperature=t, omega_d=1e13, upsilon=1500)) / math.sqrt(t)
            for t in (100, 200, 400)
        ]
        for value in values[1:]:
            self.assertTrue(math.isclose(value, values[0], rel_tol=1e-12))

    def test_mode_deformation_amplitude(self):
        vbar = vbar0(self.spec, self.bath)
        for m in range(1, 9):
            ratio = m / 16
            self.assertTrue(
                math.isclose(
                    mode_deformation_amplitude(self.spec, self.bath, m),
                    vbar / (1 - ratio**2),
                    rel_tol=1e-12,
                )
            )


class TestEnvelope(TestCase):
    def setUp(self):
        self.packet = PhononPacket(vbar0=1.5, upsilon=1500, a=3e-10, k_max=np.pi / 3e-10)

    def test_shape_peak(self):
        self.assertAlmostEqual(SHAPE_PEAK_POSITION, 1.16556, places=4)
        self.assertAlmostEqual(SHAPE_PEAK_VALUE, 0.72461, places=4)

    def test_zero_at_packet_center(self):
        self.assertEqual(packet_envelope(self.packet, 0.0), 0.0)
        self.assertEqual(packet_envelope(self.packet, 1500 * 2e-12, t=2e-12), 0.0)

    def test_series_branch_is_continuous(self):
        s = np.array([9.9e-7, 1.01e-6])
        shape = envelope_shape(s)
        self.assertTrue(math.isclose(shape[0], shape[1], rel_tol=0.05))
        self.assertAlmostEqual(envelope_shape_derivative(0.0), 1.0)

    def test_maximum_is_barrier(self):
        res = minimize_scalar(
            lambda x: -packet_envelope(self.packet, x),
            bounds=(0.1 * self.packet.a, 1.5 * self.packet.a),
            method="bounded",
            options={"xatol": 1e-14},
        )
        maximum = -res.fun
        self.assertLess(abs(maximum - 1.5 / math.sqrt(2)) / (1.5 / math.sqrt(2)), 0.005)
        self.assertAlmostEqual(self.packet.barrier_height, 1.5 / math.sqrt(2))

    def test_decays_far_away(self):
        for x in (100 * self.packet.a, -100 * self.packet.a, 100.3 * self.packet.a):
            self.assertLess(abs(packet_envelope(self.packet, x)), 0.02 * self.packet.vbar0)

    @given(
        x=st.floats(min_value=-1e-8, max_value=1e-8),
        t=st.floats(min_value=0, max_value=1e-11),
    )
    def test_traveling_wave_identity(self, x, t):
        moved = packet_envelope(self.packet, x, t)
        reference = packet_envelope(self.packet, x - self.packet.upsilon * t, 0.0)
        self.assertEqual(moved, reference)

    def test_array_input(self):
        values = packet_envelope(self.packet, np.linspace(-3e-9, 3e-9, 11))
        self.assertEqual(values.shape, (11,))


class TestPacketFromModes(TestCase):
    def setUp(self):
        self.spec = LatticeSpec.from_angstrom(3.0, n=100_000, v0=2.0, ion_mass=1.054e-25)
        self.theta_d = hbar * 1e13 / k_B

    def bath(self, temperature: float) -> BathSpec:
        return BathSpec(temperature=temperature, omega_d=1e13, upsilon=1500)

    def test_high_temperature_scaling(self):
        cold = packet_from_modes(self.spec, self.bath(200), Regime.HIGH_T)
        hot = packet_from_modes(self.spec, self.bath(800), Regime.HIGH_T)

        self.assertTrue(math.isclose(hot.vbar0 / cold.vbar0, 2.0, rel_tol=1e-12))
        self.assertEqual(hot.k_max, np.pi / self.spec.a)
        self.assertEqual(hot.regime, Regime.HIGH_T)

    def test_low_temperature_scaling(self):
        cold = packet_from_modes(self.spec, self.bath(0.01 * self.theta_d), Regime.LOW_T)
        warm = packet_from_modes(self.spec, self.bath(0.02 * self.theta_d), Regime.LOW_T)

        self.assertTrue(math.isclose(warm.vbar0 / cold.vbar0, 2.0, rel_tol=1e-12))
        self.assertTrue(math.isclose(warm.k_max / cold.k_max, 2.0, rel_tol=1e-12))

    def test_low_temperature_slopes(self):
        temperatures = np.geomspace(0.005, 0.05, 6) * self.theta_d
        low = [packet_from_modes(self.spec, self.bath(t), Regime.LOW_T).vbar0 for t in temperatures]
        high = [vbar0(self.spec, self.bath(t)) for t in temperatures]

        self.assertLess(abs(np.polyfit(np.log(temperatures), np.log(low), 1)[0] - 1.0), 1e-6)
        self.assertLess(abs(np.polyfit(np.log(temperatures), np.log(high), 1)[0] - 0.5), 1e-6)

    def test_low_temperature_regime_violation(self):
        with self.assertRaises(RegimeError):
            packet_from_modes(self.spec, self.bath(self.theta_d), Regime.LOW_T)

        with self.assertRaises(RegimeError):
            packet_from_modes(self.spec, self.bath(0.0), Regime.LOW_T)

    def test_synthesized_packet_amplitude(self):
        """The explicit mode sum follows the closed-form low temperature amplitude"""
        ratios = []
        for fraction in (0.01, 0.02, 0.04):
            bath = self.bath(fraction * self.theta_d)
            packet = packet_from_modes(self.spec, bath, Regime.LOW_T)
            x = 2 * np.linspace(0.02, 3.0, 600) / packet.k_max
            synthesized = synthesize_packet(self.spec, bath, Regime.LOW_T, x)
            ratios.append(np.max(np.abs(synthesized)) / packet.vbar0)

        for ratio in ratios:
            self.assertLess(abs(ratio / SHAPE_PEAK_VALUE - 1), 0.05)
            self.assertLess(abs(ratio / ratios[0] - 1), 0.05)

    def test_synthesis_requires_modes_below_cutoff(self):
        spec = LatticeSpec.from_angstrom(3.0, n=16, v0=2.0, ion_mass=1.054e-25)
        with self.assertRaises(ValueError):
            synthesize_packet(spec, self.bath(0.01 * self.theta_d), Regime.LOW_T, [0.0])

    def test_synthesis_is_deterministic(self):
        bath = self.bath(0.02 * self.theta_d)
        x = np.linspace(-5e-8, 5e-8, 50)
        first = synthesize_packet(self.spec, bath, Regime.LOW_T, x)
        second = synthesize_packet(self.spec, bath, Regime.LOW_T, x)
        self.assertTrue(np.array_equal(first, second))


class TestTwoDimensional(TestCase):
    def setUp(self):
        self.spec = LatticeSpec.from_angstrom(3.0, n=32, v0=10.0, ion_mass=1e-25)
        self.scale = self.spec.v0 * 2 * np.pi / self.spec.a

    def test_transverse_vanishes(self):
        for m in range(1, 11):
            self.assertLess(abs(transverse_2d_a0(self.spec, m)) / self.scale, 1e-10)

    def test_transverse_zero_potential(self):
        spec = LatticeSpec.model_construct(a=3e-10, n=32, v0=0.0, ion_mass=1e-25)
        self.assertEqual(abs(transverse_2d_a0(spec, 3)), 0.0)

    def test_longitudinal_is_half_of_one_dimensional(self):
        ratios = [
            longitudinal_2d_a0(self.spec, m).imag / fourier_a0(self.spec, m).imag
            for m in (1, 4, 9, 15)
        ]
        for ratio in ratios:
            self.assertAlmostEqual(ratio, 0.5, places=6)

    @settings(max_examples=10, deadline=None)
    @given(m=st.integers(min_value=1, max_value=15))
    def test_longitudinal_ratio_constant(self, m):
        ratio = longitudinal_2d_a0(self.spec, m, points=101).imag / fourier_a0(self.spec, m).imag
        self.assertAlmostEqual(ratio, 0.5, places=5)
