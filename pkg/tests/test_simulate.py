import numpy as np
import pytest

from swarmchor.config import SimConfig
from swarmchor.errors import LengthMismatch
from swarmchor.simulate import DroneState, SimLog, controller_step, run_simulation, sim_step

CFG = SimConfig()


class TestControllerStep:
    def test_pd_oracle_without_feedforward(self):
        state = DroneState(p=np.array([0.0, 0.0, 1.0]), v=np.array([0.1, 0.0, 0.0]), t=0.0)
        ref = np.array([0.2, 0.0, 1.0])
        a = controller_step(state, ref, CFG)
        # a = kp*(ref - p) - kd*v
        np.testing.assert_allclose(a, [16 * 0.2 - 8 * 0.1, 0.0, 0.0], atol=1e-12)

    def test_feedforward_oracle(self):
        state = DroneState(p=np.zeros(3), v=np.zeros(3), t=0.0)
        a = controller_step(
            state, np.array([0.1, 0.0, 0.0]), CFG,
            ref_v=np.array([0.5, 0.0, 0.0]), ref_a=np.array([1.0, 0.0, 0.0]),
        )
        np.testing.assert_allclose(a, [16 * 0.1 + 8 * 0.5 + 1.0, 0.0, 0.0], atol=1e-12)

    def test_clamped(self):
        state = DroneState(p=np.zeros(3), v=np.zeros(3), t=0.0)
        a = controller_step(state, np.array([100.0, 0.0, 0.0]), CFG)
        assert a[0] == CFG.accel_clamp

    def test_at_reference_zero_command(self):
        state = DroneState(p=np.ones(3), v=np.zeros(3), t=0.0)
        a = controller_step(state, np.ones(3), CFG)
        np.testing.assert_array_equal(a, np.zeros(3))


class TestSimStep:
    def test_semi_implicit_euler_oracle(self):
        state = DroneState(p=np.zeros(3), v=np.array([1.0, 0.0, 0.0]), t=0.0)
        out = sim_step(state, np.array([2.0, 0.0, 0.0]), dt=0.1, drag_coeff=0.1)
        v_expected = (1.0 + 2.0 * 0.1) * (1.0 - 0.1 * 0.1)
        np.testing.assert_allclose(out.v, [v_expected, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.p, [v_expected * 0.1, 0.0, 0.0], atol=1e-12)
        assert out.t == pytest.approx(0.1)

    def test_rejects_nan_state(self):
        with pytest.raises(ValueError):
            DroneState(p=np.array([np.nan, 0.0, 0.0]), v=np.zeros(3), t=0.0)


class TestRunSimulation:
    def test_static_reference_converges(self):
        ref = np.tile(np.array([0.3, -0.2, 1.2]), (1, 48 * 3 + 1, 1))
        log = run_simulation(ref, CFG, np.array([[0.0, 0.0, 1.0]]))
        final_err = np.linalg.norm(log.positions[0, -1] - ref[0, 0])
        assert final_err < 1e-3
        assert np.linalg.norm(log.velocities[0, -1]) < 1e-2

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        cmds = np.cumsum(rng.normal(scale=0.01, size=(2, 49, 3)), axis=1) + [0, 0, 1.0]
        init = cmds[:, 0]
        a = run_simulation(cmds, CFG, init)
        b = run_simulation(cmds, CFG, init)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_moving_reference_tracked_closely(self):
        # constant-velocity reference at 0.5 m/s: feedforward keeps the lag small
        t = np.arange(0, 48 * 4 + 1) / 48.0
        cmds = np.zeros((1, len(t), 3))
        cmds[0, :, 0] = 0.5 * t
        cmds[0, :, 2] = 1.0
        log = run_simulation(cmds, CFG, np.array([[0.0, 0.0, 1.0]]))
        # skip the spin-up, then the tracking error must stay in millimeters
        T = log.positions.shape[1]
        err = np.linalg.norm(log.positions[0, T // 2 :] - log.references[0, T // 2 :], axis=1)
        assert float(err.max()) < 0.02

    def test_shape_contract(self):
        cmds = np.zeros((2, 10, 3))
        cmds[..., 2] = 1.0
        log = run_simulation(cmds, CFG, cmds[:, 0])
        substeps = int(round(CFG.sim_hz / CFG.ctrl_hz))
        assert log.positions.shape == (2, 9 * substeps + 1, 3)
        assert log.n_drones == 2

    def test_input_validation(self):
        with pytest.raises(LengthMismatch):
            run_simulation(np.zeros((2, 10, 3)), CFG, np.zeros((3, 3)))
        with pytest.raises(LengthMismatch):
            run_simulation(np.zeros((10, 3)), CFG, np.zeros((1, 3)))


class TestSimLog:
    def _log(self):
        cmds = np.zeros((1, 20, 3))
        cmds[..., 2] = 1.0
        return run_simulation(cmds, CFG, cmds[:, 0])

    def test_to_dict_downsamples(self):
        log = self._log()
        full = log.to_dict()
        ds = log.to_dict(fps=30.0)
        assert full["fps"] == CFG.sim_hz
        assert ds["fps"] == pytest.approx(30.0)
        assert len(ds["times"]) == int(np.ceil(len(full["times"]) / 8))

    def test_csv_roundtrip(self, tmp_path):
        import csv

        log = self._log()
        log.write_csv(tmp_path / "sim.csv")
        with open(tmp_path / "sim.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["drone_id", "t", "x", "y", "z", "vx", "vy", "vz",
                           "ref_x", "ref_y", "ref_z"]
        assert len(rows) == 1 + log.positions.shape[1]
        assert float(rows[1][4]) == pytest.approx(log.positions[0, 0, 2], abs=1e-6)
