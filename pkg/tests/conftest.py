import pytest

from dare import Dataset, Kernel, ObservationRow, SimConfig, simulate_dataset


def tiny_dataset():
    """One subject, two covariate columns, three intervals, infection at the
    last one. Used wherever a handmade fixture with known likelihood values
    is needed."""
    cov = (1.0, 0.6)
    rows = (
        ObservationRow("a", 1, 1.0, 0, cov),
        ObservationRow("a", 2, 2.0, 0, cov),
        ObservationRow("a", 3, 7.0, 1, cov),
    )
    return Dataset(rows=rows, covariate_names=("intercept", "x1"), n_subjects=1)


def small_sim(kernel=Kernel.BETA_POISSON, sigma=1.0, theta1=1.0, seed=42,
              n_subjects=215):
    config = SimConfig(n_subjects=n_subjects, sigma=sigma, dgp_kernel=kernel,
                       theta1=theta1, seed=seed)
    dataset, truth = simulate_dataset(config)
    return dataset


@pytest.fixture(scope="session")
def sim_dataset():
    return small_sim()
