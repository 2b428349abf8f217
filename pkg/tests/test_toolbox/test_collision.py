import math
from unittest import TestCase

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import e as elementary_charge
from scipy.constants import m_e

from phonontide.toolbox.collision import (CollisionOutcome, ElectronState,
                                          Geometry, OutcomeKind,
                                          barrier_energy, brute_force_sweep,
                                          brute_force_transit, collide_1d,
                                          collide_oblique, collision_sweep)
from phonontide.toolbox.exceptions import NoCollisionError, TrappedOrbitError
from phonontide.toolbox.lattice import PhononPacket


def unit_packet(vbar0: float, upsilon: float) -> PhononPacket:
    return PhononPacket(vbar0=vbar0, upsilon=upsilon, a=1.0, k_max=np.pi)


class TestCollide1D(TestCase):
    def test_head_on_rebound(self):
        # Barrier 10/√2 lies above ½·3²
        e = ElectronState(v=2.0, mass=1.0, charge=1.0)
        outcome = collide_1d(e, unit_packet(10.0, 1.0), Geometry.HEAD_ON)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertEqual(outcome.v_out, -4.0)
        self.assertEqual(outcome.delta_e_electron, 6.0)
        self.assertEqual(outcome.delta_e_phonon, -6.0)

    def test_co_moving_rebound(self):
        e = ElectronState(v=3.0, mass=1.0, charge=1.0)
        outcome = collide_1d(e, unit_packet(10.0, 1.0), Geometry.CO_MOVING)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertEqual(outcome.v_out, -1.0)
        self.assertEqual(outcome.delta_e_electron, -4.0)

    def test_co_moving_rebound_keeps_direction(self):
        e = ElectronState(v=3.0, mass=1.0, charge=1.0)
        outcome = collide_1d(e, unit_packet(10.0, 2.0), Geometry.CO_MOVING)
        self.assertEqual(outcome.v_out, 1.0)

    def test_static_barrier_is_elastic(self):
        e = ElectronState(v=2.0, mass=1.0, charge=1.0)
        outcome = collide_1d(e, unit_packet(10.0, 0.0), Geometry.HEAD_ON)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertEqual(outcome.v_out, -2.0)
        self.assertEqual(outcome.delta_e_electron, 0.0)

    def test_no_barrier_passes(self):
        e = ElectronState(v=2.0, mass=1.0, charge=1.0)
        for geometry in Geometry:
            outcome = collide_1d(e, unit_packet(0.0, 1.0), geometry)
            self.assertEqual(outcome.kind, OutcomeKind.PASSED)
            self.assertEqual(outcome.v_out, 2.0)
            self.assertEqual(outcome.delta_e_electron, 0.0)

    def test_tie_passes(self):
        # ½·1·2² equals the barrier exactly
        e = ElectronState(v=1.0, mass=1.0, charge=1.0)
        packet = unit_packet(2 * np.sqrt(2), 1.0)
        self.assertEqual(barrier_energy(packet, 1.0), 2.0)
        self.assertEqual(collide_1d(e, packet, Geometry.HEAD_ON).kind, OutcomeKind.PASSED)

    def test_co_moving_without_collision(self):
        e = ElectronState(v=1.0, mass=1.0, charge=1.0)
        with self.assertRaises(NoCollisionError):
            collide_1d(e, unit_packet(10.0, 1.0), Geometry.CO_MOVING)

    def test_rejects_backward_electron(self):
        e = ElectronState(v=-1.0, mass=1.0, charge=1.0)
        with self.assertRaises(ValueError):
            collide_1d(e, unit_packet(10.0, 1.0), Geometry.HEAD_ON)

    def test_unbalanced_outcome_is_invalid(self):
        with self.assertRaises(ValueError):
            CollisionOutcome(
                kind=OutcomeKind.PASSED, v_out=1.0, delta_e_electron=1.0, delta_e_phonon=0.0
            )

    @given(
        v=st.floats(min_value=1e-3, max_value=1e3),
        upsilon=st.floats(min_value=0, max_value=1e2),
        vbar0=st.floats(min_value=0, max_value=1e4),
        geometry=st.sampled_from(Geometry),
    )
    def test_energy_bookkeeping(self, v, upsilon, vbar0, geometry):
        e = ElectronState(v=v, mass=1.0, charge=1.0)
        try:
            outcome = collide_1d(e, unit_packet(vbar0, upsilon), geometry)
        except NoCollisionError:
            return

        self.assertEqual(outcome.delta_e_electron + outcome.delta_e_phonon, 0)
        w_in = v - (-upsilon if geometry == Geometry.HEAD_ON else upsilon)
        w_out = outcome.v_out - (-upsilon if geometry == Geometry.HEAD_ON else upsilon)
        self.assertTrue(
            math.isclose(abs(w_out), abs(w_in), rel_tol=1e-12, abs_tol=1e-12 * (v + upsilon))
        )

    @given(
        upsilon=st.floats(min_value=0, max_value=10),
        vbar0=st.floats(min_value=0.1, max_value=100),
    )
    def test_single_switch_to_passed(self, upsilon, vbar0):
        packet = unit_packet(vbar0, upsilon)
        kinds = [
            collide_1d(ElectronState(v=v, mass=1.0, charge=1.0), packet, Geometry.HEAD_ON).kind
            for v in np.linspace(0.01, 30, 200)
        ]
        switches = sum(1 for first, second in zip(kinds, kinds[1:]) if first != second)
        self.assertLessEqual(switches, 1)
        if switches:
            self.assertEqual(kinds[0], OutcomeKind.REBOUNDED)
            self.assertEqual(kinds[-1], OutcomeKind.PASSED)


class TestCollideOblique(TestCase):
    def setUp(self):
        self.packet = unit_packet(1.0, 0.0)

    def test_grazing_incidence(self):
        e = ElectronState(v=5.0, theta=0.0, mass=1.0, charge=1.0)
        outcome = collide_oblique(e, self.packet)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertEqual(outcome.forward_change_factor, 0.0)
        self.assertEqual(outcome.v_out, 5.0)
        self.assertTrue(outcome.stationary_tide)

    def test_normal_incidence_passes(self):
        e = ElectronState(v=5.0, theta=np.pi / 2, mass=1.0, charge=1.0)
        outcome = collide_oblique(e, self.packet)

        self.assertEqual(outcome.kind, OutcomeKind.PASSED)
        self.assertAlmostEqual(outcome.v_perpendicular, 5.0)
        self.assertAlmostEqual(outcome.v_parallel, 0.0)

    def test_reflection_at_45_degrees(self):
        e = ElectronState(v=1.0, theta=np.pi / 4, mass=1.0, charge=1.0)
        outcome = collide_oblique(e, self.packet)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertAlmostEqual(outcome.forward_change_factor, 1.0, places=15)
        self.assertEqual(outcome.v_parallel, np.cos(np.pi / 4))
        self.assertEqual(outcome.v_perpendicular, -np.sin(np.pi / 4))
        self.assertAlmostEqual(math.hypot(outcome.v_parallel, outcome.v_perpendicular), 1.0)
        self.assertAlmostEqual(outcome.v_out, 0.0)

    @given(
        speed=st.floats(min_value=0.01, max_value=100),
        theta=st.floats(min_value=0, max_value=np.pi / 2),
    )
    def test_rebound_is_elastic(self, speed, theta):
        e = ElectronState(v=speed, theta=theta, mass=1.0, charge=1.0)
        outcome = collide_oblique(e, self.packet)

        self.assertEqual(outcome.v_parallel, speed * np.cos(theta))
        self.assertTrue(
            math.isclose(
                math.hypot(outcome.v_parallel, outcome.v_perpendicular), speed, rel_tol=1e-12
            )
        )
        if outcome.kind == OutcomeKind.REBOUNDED:
            self.assertTrue(
                math.isclose(
                    speed - outcome.v_out,
                    speed * outcome.forward_change_factor,
                    rel_tol=1e-9,
                    abs_tol=1e-12,
                )
            )

    def test_requires_angle(self):
        with self.assertRaises(ValueError):
            collide_oblique(ElectronState(v=1.0), self.packet)

    def test_rejects_angle_out_of_range(self):
        with self.assertRaises(ValueError):
            ElectronState(v=1.0, theta=2.0)


class TestCollisionSweep(TestCase):
    def test_records(self):
        packet = unit_packet(10.0, 1.0)
        records = collision_sweep(
            [0.5, 2.0, 20.0], [1.0], packet, Geometry.CO_MOVING, mass=1.0, charge=1.0
        )

        self.assertEqual(len(records), 3)
        self.assertIsNone(records[0].kind)
        self.assertEqual(records[1].kind, OutcomeKind.REBOUNDED)
        self.assertEqual(records[2].kind, OutcomeKind.PASSED)
        self.assertAlmostEqual(records[2].barrier, 10.0 / np.sqrt(2))


class TestBruteForce(TestCase):
    def setUp(self):
        self.packet = PhononPacket(vbar0=1.0, upsilon=0.0, a=3e-10, k_max=np.pi / 3e-10)
        self.barrier = barrier_energy(self.packet)
        self.w_star = np.sqrt(2 * self.barrier / m_e)

    def test_double_barrier_energy_passes(self):
        v = np.sqrt(2) * self.w_star
        outcome = brute_force_transit(ElectronState(v=v), self.packet)

        self.assertEqual(outcome.kind, OutcomeKind.PASSED)
        self.assertLess(abs(outcome.v_out - v) / v, 1e-6)
        self.assertLess(outcome.energy_drift, 1e-6)

    def test_half_barrier_energy_rebounds(self):
        v = self.w_star / np.sqrt(2)
        outcome = brute_force_transit(ElectronState(v=v), self.packet)

        self.assertEqual(outcome.kind, OutcomeKind.REBOUNDED)
        self.assertLess(abs(outcome.v_out + v) / v, 1e-6)
        self.assertLess(outcome.energy_drift, 1e-6)

    def test_no_barrier(self):
        packet = self.packet.model_copy(update={"vbar0": 0.0})
        outcome = brute_force_transit(ElectronState(v=1e5), packet)
        self.assertEqual(outcome.kind, OutcomeKind.PASSED)
        self.assertEqual(outcome.v_out, 1e5)

    def test_trapped_orbit(self):
        with self.assertRaises(TrappedOrbitError):
            brute_force_transit(ElectronState(v=self.w_star), self.packet, max_steps=10)

    def test_threshold_band(self):
        """Outside a narrow band around the barrier the oracle agrees with the threshold"""
        energy_ratios = np.linspace(0.98, 1.02, 41)
        w = self.w_star * np.sqrt(energy_ratios)
        kinds, _, _, _ = brute_force_sweep(w, self.packet)

        for ratio, kind, velocity in zip(energy_ratios, kinds, w):
            if abs(ratio - 1) < 0.005:
                continue
            expected = collide_1d(ElectronState(v=velocity), self.packet, Geometry.HEAD_ON).kind
            self.assertEqual(kind, expected, msg=f"energy ratio {ratio}")

    def test_galilean_consistency(self):
        """Analytic outcomes equal integrated packet-frame transits shifted by the packet velocity"""
        v_values = np.linspace(0.3, 1.5, 20) * self.w_star
        upsilon_values = np.linspace(0.0, 0.5, 20) * self.w_star

        v_grid, upsilon_grid = np.meshgrid(v_values, upsilon_values, indexing="ij")
        w = (v_grid + upsilon_grid).ravel()
        kinds, w_out, drift, _ = brute_force_sweep(w, self.packet)

        compared = 0
        for index, (v, upsilon) in enumerate(zip(v_grid.ravel(), upsilon_grid.ravel())):
            if abs(0.5 * m_e * w[index] ** 2 / self.barrier - 1) < 0.005:
                continue

            packet = self.packet.model_copy(update={"upsilon": float(upsilon)})
            analytic = collide_1d(ElectronState(v=float(v)), packet, Geometry.HEAD_ON)

            self.assertEqual(kinds[index], analytic.kind)
            v_out = -upsilon + w_out[index]
            self.assertLess(abs(v_out - analytic.v_out) / w[index], 1e-6)
            self.assertEqual(analytic.delta_e_electron + analytic.delta_e_phonon, 0)
            compared += 1

        self.assertGreater(compared, 390)
        self.assertTrue(np.all(drift[np.isfinite(drift)] < 1e-6))

    def test_uses_elementary_charge_by_default(self):
        self.assertAlmostEqual(self.barrier, elementary_charge / np.sqrt(2), delta=1e-30)
