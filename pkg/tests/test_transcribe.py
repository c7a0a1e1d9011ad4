"""Graph construction from robot state: twists, factors, loops, priors."""

import numpy as np
import pytest

from dyngraph.errors import InconsistentLoopState, RankDeficient
from dyngraph.fgraph import Kind, VarKey
from dyngraph.spatial import Accel, Wrench
from dyngraph.oracle import rnea_full, rnea_torques
from dyngraph.transcribe import (
    JointState,
    ProblemSpec,
    build_graph,
    compute_twists,
    link_poses,
    planar_factor,
    solve_dynamics,
)

from conftest import random_state

GRAVITY_Y = (0.0, -9.81, 0.0)


class TestComputeTwists:
    def test_zero_rates_zero_twists(self, three_r):
        st = JointState(np.array([0.4, -1.1, 0.2]), np.zeros(3))
        for tw in compute_twists(three_r, st).values():
            assert np.abs(tw.as_vector()).max() == 0.0

    def test_single_joint_scales_axis(self, pendulum):
        st = JointState(np.array([0.7]), np.array([2.0]))
        tw = compute_twists(pendulum, st)["bob"]
        axis = pendulum.tree_joints[0].axis.vector
        np.testing.assert_allclose(tw.as_vector(), 2.0 * axis, atol=1e-14)

    def test_matches_differentiated_kinematics(self, three_r):
        # body-frame linear velocity equals R^T d/dt(origin), with the
        # derivative taken by central difference along the joint path
        rng = np.random.default_rng(201)
        h = 1e-6
        for _ in range(10):
            st = random_state(rng, 3)
            ahead = JointState(st.q + h * st.qd, st.qd)
            behind = JointState(st.q - h * st.qd, st.qd)
            for link in ("link1", "link2", "link3"):
                p_a = link_poses(three_r, ahead)[link].transform_point(np.zeros(3))
                p_b = link_poses(three_r, behind)[link].transform_point(np.zeros(3))
                v_world = (p_a - p_b) / (2 * h)
                pose = link_poses(three_r, st)[link]
                tw = compute_twists(three_r, st)[link]
                np.testing.assert_allclose(
                    pose.rotation.T @ v_world, tw.linear, atol=1e-5
                )

    def test_consistent_loop_rates_accepted(self, five_bar, five_bar_kin):
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        compute_twists(five_bar, st)

    def test_inconsistent_loop_rates_rejected(self, five_bar, five_bar_kin):
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        qd = st.qd.copy()
        qd[1] += 1e-3
        with pytest.raises(InconsistentLoopState):
            compute_twists(five_bar, JointState(st.q, qd))


class TestBuildGraph:
    def test_serial_inverse_counts(self, pendulum, three_r, six_r):
        # a serial inverse problem carries three factors and three unknowns
        # per joint: acceleration, balance, torque
        for m in (pendulum, three_r, six_r):
            n = len(m.tree_joints)
            st = JointState(np.full(n, 0.3), np.full(n, 0.1))
            g = build_graph(m, st, ProblemSpec.inverse(m, np.zeros(n)))
            assert len(g.factors) == 3 * n
            assert len(g.variables) == 3 * n

    def test_inverse_unknown_set(self, three_r):
        st = JointState(np.zeros(3), np.zeros(3))
        g = build_graph(three_r, st, ProblemSpec.inverse(three_r, np.zeros(3)))
        got = {str(v) for v in g.variables}
        assert got == {"Vd1", "Vd2", "Vd3", "F1", "F2", "F3", "tau1", "tau2", "tau3"}

    def test_forward_unknown_set(self, three_r):
        st = JointState(np.zeros(3), np.zeros(3))
        g = build_graph(three_r, st, ProblemSpec.forward(three_r, np.zeros(3)))
        got = {str(v) for v in g.variables}
        assert got == {
            "Vd1", "Vd2", "Vd3", "F1", "F2", "F3", "qdd1", "qdd2", "qdd3",
        }

    def test_hybrid_unknown_set(self, three_r):
        st = JointState(np.zeros(3), np.zeros(3))
        spec = ProblemSpec.hybrid(
            three_r,
            {"j1": {"accel": 0.5}, "j2": {"torque": 1.0}, "j3": {"torque": -0.2}},
        )
        g = build_graph(three_r, st, spec)
        got = {str(v) for v in g.variables}
        assert got == {
            "Vd1", "Vd2", "Vd3", "F1", "F2", "F3", "tau1", "qdd2", "qdd3",
        }

    def test_knowns_folded_into_rhs(self, three_r):
        # designated quantities never appear as variables, only as numbers
        st = JointState(np.array([0.2, 0.1, -0.3]), np.array([0.5, -0.2, 0.1]))
        g = build_graph(three_r, st, ProblemSpec.inverse(three_r, np.ones(3)))
        kinds = {v.kind for v in g.variables}
        assert Kind.JOINT_ACCEL not in kinds
        assert Kind.TWIST not in kinds
        assert Kind.RATE not in kinds

    def test_gravity_static_torques(self, three_r):
        st = JointState(np.array([0.4, -0.9, 0.3]), np.zeros(3))
        res = solve_dynamics(
            three_r, st, ProblemSpec.inverse(three_r, np.zeros(3), gravity=GRAVITY_Y)
        )
        tau = np.array([res.torques[j.name] for j in three_r.tree_joints])
        ref = rnea_torques(three_r, st, np.zeros(3), gravity=GRAVITY_Y)
        np.testing.assert_allclose(tau, ref, atol=1e-9)

    def test_factors_vanish_at_recursive_solution(self, six_r):
        # transcription and the recursive sweep encode the same physics:
        # the sweep's full variable set zeroes every hard factor
        rng = np.random.default_rng(202)
        for _ in range(5):
            st = random_state(rng, 6)
            qdd = rng.uniform(-1, 1, 6)
            full = rnea_full(six_r, st, qdd, gravity=GRAVITY_Y)
            g = build_graph(
                six_r, st, ProblemSpec.inverse(six_r, qdd, gravity=GRAVITY_Y)
            )
            values = {}
            for i, j in enumerate(six_r.tree_joints, start=1):
                values[VarKey(Kind.ACCEL, i)] = full["accels"][j.child]
                values[VarKey(Kind.WRENCH, i)] = full["wrenches"][j.child]
                values[VarKey(Kind.TORQUE, i)] = np.array([full["torques"][i - 1]])
            assert g.residual_max(values) < 1e-9

    def test_tool_wrench_enters_balance(self, three_r):
        rng = np.random.default_rng(203)
        st = random_state(rng, 3)
        wrench = rng.uniform(-2, 2, 6)
        spec = ProblemSpec.inverse(
            three_r, np.zeros(3), gravity=GRAVITY_Y, tool_wrench=Wrench.from_vector(wrench)
        )
        res = solve_dynamics(three_r, st, spec)
        tau = np.array([res.torques[j.name] for j in three_r.tree_joints])
        ref = rnea_torques(
            three_r, st, np.zeros(3), gravity=GRAVITY_Y, tool_wrench=wrench
        )
        np.testing.assert_allclose(tau, ref, atol=1e-9)

    def test_base_accel_enters_propagation(self, three_r):
        rng = np.random.default_rng(204)
        st = random_state(rng, 3)
        base = rng.uniform(-1, 1, 6)
        spec = ProblemSpec.inverse(
            three_r, np.zeros(3), gravity=GRAVITY_Y, base_accel=Accel.from_vector(base)
        )
        res = solve_dynamics(three_r, st, spec)
        tau = np.array([res.torques[j.name] for j in three_r.tree_joints])
        ref = rnea_torques(
            three_r, st, np.zeros(3), gravity=GRAVITY_Y, base_accel=base
        )
        np.testing.assert_allclose(tau, ref, atol=1e-9)

    def test_min_torque_prior_adds_soft_tier(self, three_r):
        st = JointState(np.zeros(3), np.zeros(3))
        spec = ProblemSpec.forward(three_r, np.zeros(3), min_torque_prior=True)
        g = build_graph(three_r, st, spec)
        # forward problems have no unknown torques, so no priors appear
        assert all(f.weight == 1.0 for f in g.factors)
        spec = ProblemSpec.inverse(three_r, np.zeros(3), min_torque_prior=True)
        g = build_graph(three_r, st, spec)
        soft = [f for f in g.factors if f.weight == 1e-3]
        assert len(soft) == 3
        assert all(list(f.blocks) == [VarKey(Kind.TORQUE, i + 1)]
                   for i, f in enumerate(sorted(soft, key=lambda f: f.name)))


class TestPlanarFactor:
    def test_axis_aligned_rows(self):
        f5 = VarKey(Kind.WRENCH, 5)
        f = planar_factor(f5, np.array([0.0, 0.0, 1.0]))
        block = f.blocks[f5]
        assert block.shape == (3, 6)
        picked = sorted(np.flatnonzero(np.abs(block).sum(axis=0)))
        assert picked == [0, 1, 5]
        np.testing.assert_allclose(np.zeros(3), f.rhs, atol=1e-15)

    def test_rotated_normal_annihilates_planar_wrench(self):
        # a wrench transmissible through a planar revolute joint has moment
        # along the normal and force within the plane; the factor zeroes it
        rng = np.random.default_rng(211)
        f5 = VarKey(Kind.WRENCH, 5)
        for _ in range(10):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            f = planar_factor(f5, n)
            t1 = np.cross(n, rng.normal(size=3))
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(n, t1)
            w = np.concatenate([rng.normal() * n,
                                rng.normal() * t1 + rng.normal() * t2])
            np.testing.assert_allclose(f.blocks[f5] @ w, np.zeros(3), atol=1e-12)

    def test_normal_scale_invariant(self):
        # the constraint depends on the plane, not the normal's magnitude
        rng = np.random.default_rng(212)
        f5 = VarKey(Kind.WRENCH, 5)
        a = planar_factor(f5, np.array([0.0, 0.0, 1.0])).blocks[f5]
        b = planar_factor(f5, np.array([0.0, 0.0, 7.5])).blocks[f5]
        for _ in range(5):
            w = rng.normal(size=6)
            assert (np.abs(a @ w) < 1e-12).all() == (np.abs(b @ w) < 1e-12).all()


class TestFiveBar:
    def forward_spec(self, model, planar=True, **kw):
        return ProblemSpec.forward(
            model,
            np.array([1.0, 0.5]),
            gravity=GRAVITY_Y,
            planar_loops=(("j5", (0.0, 0.0, 1.0)),) if planar else (),
            **kw,
        )

    def test_forward_without_planar_factor_underdetermined(
        self, five_bar, five_bar_kin
    ):
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        with pytest.raises(RankDeficient) as err:
            solve_dynamics(five_bar, st, self.forward_spec(five_bar, planar=False))
        assert "F5" in str(err.value)

    def test_forward_with_planar_factor_solves(self, five_bar, five_bar_kin):
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        res = solve_dynamics(five_bar, st, self.forward_spec(five_bar))
        assert res.residual_max < 1e-8

    def test_forward_graph_has_unary_loop_factor(self, five_bar, five_bar_kin):
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        g = build_graph(five_bar, st, self.forward_spec(five_bar))
        f5 = VarKey(Kind.WRENCH, 5)
        unary = [f for f in g.factors if list(f.blocks) == [f5]]
        # the passive loop joint folds its zero torque into one unary row,
        # and the declared plane contributes three more
        planar = [f for f in unary if f.blocks[f5].shape[0] == 3]
        assert len(planar) == 1

    def test_forward_accels_satisfy_closure(self, five_bar, five_bar_kin):
        # solved accelerations must be differentiations of the loop closure
        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        res = solve_dynamics(five_bar, st, self.forward_spec(five_bar))
        qdd = np.array([res.accels[f"j{i}"] for i in range(1, 6)])
        qdd24 = five_bar_kin.accels(st.q, st.qd, qdd[0], qdd[2])
        np.testing.assert_allclose(qdd[1], qdd24[0], atol=1e-7)
        np.testing.assert_allclose(qdd[3], qdd24[1], atol=1e-7)
        np.testing.assert_allclose(
            qdd[4], (qdd[2] + qdd[3]) - (qdd[0] + qdd[1]), atol=1e-7
        )

    def test_inverse_torques_match_reduced_model(self, five_bar, five_bar_kin):
        """Cut the loop, solve the open tree, pull torques back through the
        closure jacobian: tau_pair = J^T tau_tree. The graph solve with the
        loop intact must agree."""
        from dyngraph.model import RobotModel

        st = five_bar_kin.state(1.9, 1.2, 0.3, -0.2)
        qdd13 = np.array([0.7, -0.4])
        qdd24 = five_bar_kin.accels(st.q, st.qd, *qdd13)
        spec = ProblemSpec.hybrid(
            five_bar,
            {
                "j1": {"accel": qdd13[0]},
                "j2": {"torque": 0.0},
                "j3": {"accel": qdd13[1]},
                "j4": {"torque": 0.0},
            },
            gravity=GRAVITY_Y,
            planar_loops=(("j5", (0.0, 0.0, 1.0)),),
        )
        res = solve_dynamics(five_bar, st, spec)

        tree = RobotModel(five_bar.links, five_bar.tree_joints)
        qdd_t = np.array([qdd13[0], qdd24[0], qdd13[1], qdd24[1]])
        tau_t = rnea_torques(
            tree, JointState(st.q[:4], st.qd[:4]), qdd_t, gravity=GRAVITY_Y
        )
        c1 = five_bar_kin.rates(st.q, 1.0, 0.0)
        c2 = five_bar_kin.rates(st.q, 0.0, 1.0)
        jac = np.array([[1.0, 0.0], [c1[0], c2[0]], [0.0, 1.0], [c1[1], c2[1]]])
        tau_pair = jac.T @ tau_t
        np.testing.assert_allclose(
            [res.torques["j1"], res.torques["j3"]], tau_pair, atol=1e-8
        )
        # passive accelerations come out closure-consistent too
        np.testing.assert_allclose(res.accels["j2"], qdd24[0], atol=1e-7)
        np.testing.assert_allclose(res.accels["j4"], qdd24[1], atol=1e-7)


class TestSolveDynamics:
    def test_result_fields(self, three_r):
        st = JointState(np.array([0.1, 0.2, 0.3]), np.array([0.0, 0.1, -0.1]))
        res = solve_dynamics(
            three_r, st, ProblemSpec.inverse(three_r, np.zeros(3), gravity=GRAVITY_Y)
        )
        assert set(res.torques) == {"j1", "j2", "j3"}
        assert set(res.accels) == {"j1", "j2", "j3"}
        assert set(res.twists) == {"base", "link1", "link2", "link3"}
        assert set(res.wrenches) == {"j1", "j2", "j3"}
        assert res.residual_max < 1e-8
        assert len(res.ordering) == len(res.graph.variables)
        assert res.solve_micros > 0 and res.build_micros > 0

    def test_named_orderings_accepted(self, three_r):
        st = JointState(np.array([0.1, 0.2, 0.3]), np.array([0.0, 0.1, -0.1]))
        inverse = ProblemSpec.inverse(three_r, np.ones(3), gravity=GRAVITY_Y)
        forward = ProblemSpec.forward(three_r, np.ones(3), gravity=GRAVITY_Y)
        for spec, names in (
            (inverse, ("auto", "rnea", "md", "nd")),
            (forward, ("auto", "crba", "aba", "md", "nd")),
        ):
            results = [solve_dynamics(three_r, st, spec, ordering=n) for n in names]
            for a, b in zip(results, results[1:]):
                for j in ("j1", "j2", "j3"):
                    assert abs(a.torques[j] - b.torques[j]) < 1e-10
                    assert abs(a.accels[j] - b.accels[j]) < 1e-10

    def test_explicit_ordering_accepted(self, three_r):
        st = JointState(np.zeros(3), np.zeros(3))
        spec = ProblemSpec.inverse(three_r, np.ones(3))
        keys = ["tau3", "tau2", "tau1", "F1", "F2", "F3", "Vd3", "Vd2", "Vd1"]
        res = solve_dynamics(three_r, st, spec, ordering=keys)
        assert [str(v) for v in res.ordering] == keys
