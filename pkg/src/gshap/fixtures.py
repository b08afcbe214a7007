"""Small seeded synthetic datasets for the three explanation types.

They stand in for public datasets that are not shipped with the package:
a separable three-species flower table, a recidivism-style table whose group
column correlates with two predictive features, and an annual forecasting
table whose last years break one feature's relationship with the target.
"""

from __future__ import annotations

import numpy as np

from .core import FeatureMatrix
from .ingest import Dataset, Schema

__all__ = ["species", "recidivism", "forecasting", "two_clusters", "latent_factor", "ALL"]

SPECIES_FEATURES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
RECIDIVISM_FEATURES = ("priors_count", "age", "race", "sex", "charge_degree", "juv_other_count")
FORECAST_FEATURES = ("G_g", "I_g", "C_g", "EX_g", "IM_g", "RELoansPctGDP")


def species(n_per_class: int = 50, seed: int = 0) -> Dataset:
    """Three well-separated classes in four measurements."""
    rng = np.random.default_rng(seed)
    centers = {
        "setosa": (5.0, 3.4, 1.5, 0.25),
        "versicolor": (5.9, 2.8, 4.3, 1.3),
        "virginica": (6.8, 3.0, 6.8, 2.4),
    }
    spread = np.array([0.3, 0.25, 0.25, 0.12])
    rows, labels = [], []
    for name, center in centers.items():
        rows.append(np.asarray(center) + spread * rng.standard_normal((n_per_class, 4)))
        labels += [name] * n_per_class
    values = np.round(np.vstack(rows), 2)
    return Dataset(FeatureMatrix(values, SPECIES_FEATURES), np.array(labels, dtype=object), None, Schema(target="species"))


def recidivism(n: int = 3000, seed: int = 0) -> Dataset:
    """Binary outcome driven by priors, age and race; race correlates with priors and age.

    ``race`` doubles as the group column (1 for the group with the higher
    predicted rate), while ``sex``, ``charge_degree`` and
    ``juv_other_count`` are independent of group membership.
    """
    rng = np.random.default_rng(seed)
    race = (rng.random(n) < 0.65).astype(float)
    priors = rng.poisson(np.where(race == 1, 3.5, 2.0)).astype(float)
    age = np.round(np.clip(rng.normal(np.where(race == 1, 30.0, 37.0), 9.0), 18, 80))
    sex = (rng.random(n) < 0.8).astype(float)
    charge = (rng.random(n) < 0.35).astype(float)
    juv = rng.poisson(0.3, n).astype(float)
    logit = 0.3 * (priors - 3.0) - 0.05 * (age - 33.0) + 0.4 * race + 0.1 * sex + 0.05 * charge
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(float)
    values = np.column_stack([priors, age, race, sex, charge, juv])
    return Dataset(
        FeatureMatrix(values, RECIDIVISM_FEATURES),
        y,
        race,
        Schema(target="two_year_recid", group="race", group_is_feature=True),
    )


def forecasting(first_year: int = 1950, last_train_year: int = 2001, last_year: int = 2009, seed: int = 0) -> Dataset:
    """Annual growth target, one row per year, features lagged one year.

    Up to ``last_train_year`` higher real-estate lending predicts higher
    growth; afterwards lending keeps rising while growth collapses.
    """
    rng = np.random.default_rng(seed)
    years = np.arange(first_year, last_year + 1)
    n = len(years)
    test = years > last_train_year
    drivers = rng.standard_normal((n, 5))
    loans = rng.normal(0.0, 1.0, n)
    loans[test] = np.linspace(1.8, 2.6, int(test.sum()))
    growth = 1.2 * drivers[:, 2] + 0.6 * drivers[:, 1] + 0.3 * drivers[:, 3] + 0.25 * rng.standard_normal(n)
    growth = growth + np.where(test, -1.5 * loans, 1.5 * loans)
    values = np.round(np.column_stack([drivers, loans]), 4)
    target = np.round(growth, 4)
    return Dataset(FeatureMatrix(values, FORECAST_FEATURES), target, None, Schema(target="gdp_growth"))


def two_clusters(n_per_class: int = 10, separation: float = 10.0, seed: int = 0) -> Dataset:
    """Two Gaussian blobs in 2-D, ``separation`` standard deviations apart."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_per_class, 2))
    b = rng.standard_normal((n_per_class, 2)) + np.array([separation, 0.0])
    labels = np.array(["a"] * n_per_class + ["b"] * n_per_class, dtype=object)
    return Dataset(FeatureMatrix(np.vstack([a, b]), ("x0", "x1")), labels, None, Schema(target="label"))


def latent_factor(n: int = 200, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Six columns driven by one hidden factor; the target is linear in that factor."""
    rng = np.random.default_rng(seed)
    factor = rng.standard_normal(n)
    loadings = rng.uniform(0.5, 1.5, 6) * rng.choice([-1.0, 1.0], 6)
    values = factor[:, None] * loadings[None, :] + noise * rng.standard_normal((n, 6))
    target = 2.0 * factor + 1.0
    return Dataset(FeatureMatrix(values, tuple(f"z{j}" for j in range(6))), target, None, Schema(target="y"))


ALL = {"species": species, "recidivism": recidivism, "forecasting": forecasting}
