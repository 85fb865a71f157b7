import pytest

from faithless.plant import ScenarioSpec, SmoothNoiseInput, ConstantInput, simulate

SEED = 2


def integral_spec(k=100.0, n_steps=100_000, seed=SEED, coherence=1.0, lag=0.0,
                  varying_r=False, sigma_d=1.0):
    inputs = {
        "R": SmoothNoiseInput(coherence, 1.0) if varying_r else ConstantInput(0.0),
        "D": SmoothNoiseInput(coherence, sigma_d),
    }
    return ScenarioSpec(
        model="IntegralLoop", k=k, lag=lag, dt=0.001, n_steps=n_steps, seed=seed,
        inputs=inputs,
    )


@pytest.fixture(scope="session")
def ex1_trace():
    return simulate(integral_spec())


@pytest.fixture(scope="session")
def ex2_trace():
    return simulate(integral_spec(varying_r=True))
