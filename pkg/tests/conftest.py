import numpy as np
import pytest

import km_rates as km


def rotation_instance():
    """90-degree plane rotation averaged with constant weight 1/2."""
    space = km.Space(dim=2)
    op = km.make_operator("rotation", space, {"angle_deg": 90.0})
    schedule = km.make_classical_km(0.5)
    start = np.array([1.0, 0.0])
    constants = km.instance_constants(start, op.fixed_point, schedule, norm=space.norm)
    cert = km.classical_km_certificate(constants.start_bound, schedule.weight_divergence,
                                       km.hilbert_modulus())
    return space, op, start, schedule, constants, cert


def example2_ball_config(out_dir="out"):
    return {
        "space": {"dim": 3, "norm": "euclidean"},
        "operator": {
            "name": "ball_projection",
            "params": {"center": [0.0, 0.0, 0.0], "radius": 1.0},
            "fixed_point": "nearest",
        },
        "start": [2.0, 0.0, 0.0],
        "schedule": {"family": "example2",
                     "params": {"lam": 0.5, "J": 2, "offset": 1, "r_star": None}},
        "certificate": {"formula": "auto"},
        "run": {"horizon": "auto", "k_max": 5, "seed": 7},
        "output": {"directory": out_dir, "formats": ["csv", "json"]},
    }


def sample_admissible_triples(count, seed, dim=3):
    """Seeded random (a, x, y, r, eps, lam) tuples satisfying the
    convexity-transfer preconditions by construction."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        a = rng.uniform(-1.0, 1.0, dim)
        x = a + rng.uniform(-1.0, 1.0, dim)
        y = a + rng.uniform(-1.0, 1.0, dim)
        dxy = float(np.linalg.norm(x - y))
        if dxy < 1e-8:
            continue
        r = max(float(np.linalg.norm(x - a)), float(np.linalg.norm(y - a)))
        if r < 1e-8:
            continue
        eps = min(2.0, dxy / r) * (1.0 - 1e-12)
        lam = float(rng.uniform(0.0, 1.0))
        out.append((a, x, y, r, eps, lam))
    return out


@pytest.fixture(scope="session")
def rotation_traj_35k():
    space, op, start, schedule, constants, cert = rotation_instance()
    traj = km.iterate(space, op, start, schedule, 35000)
    return traj, constants, cert


@pytest.fixture(scope="session")
def example2_ball_run():
    cfg = km.RunConfig.from_dict(example2_ball_config())
    instance = km.assemble(cfg)
    cert = instance.certificate
    requested = [cert.residual_rate(k) for k in range(cfg.k_max + 1)]
    requested += [cert.step_rate(k) for k in range(cfg.k_max + 1)]
    horizon = km.auto_horizon(requested)
    traj = km.iterate(instance.space, instance.operator, instance.start,
                      instance.schedule, horizon)
    return instance, traj
