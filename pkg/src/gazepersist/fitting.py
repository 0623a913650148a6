"""Ordinary least-squares linear and logarithmic fits with R^2."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ArgumentError, DegenerateError, DomainError

MODELS = ("Linear", "Log")


@dataclass(frozen=True)
class FitResult:
    """``y = a*x + b`` (Linear) or ``y = a*ln(x) + b`` (Log)."""

    model: str
    a: float
    b: float
    r2: float
    n_points: int

    def predict(self, x: float) -> float:
        return self.a * _transform(self.model, x) + self.b


def _transform(model: str, x: float) -> float:
    if model == "Linear":
        return x
    if model == "Log":
        if not x > 0:
            raise DomainError(f"log fit needs x > 0, got {x}")
        return math.log(x)
    raise ArgumentError(f"unknown model {model!r}; expected one of {MODELS}")


def _points(points: Iterable) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for x, y in points:
        xs.append(float(x))
        ys.append(float(y))
    if len(xs) < 2:
        raise ArgumentError(f"need at least 2 points, got {len(xs)}")
    return xs, ys


def r_squared(points, model: str, a: float, b: float) -> float:
    xs, ys = _points(points)
    ybar = math.fsum(ys) / len(ys)
    ssr = math.fsum((y - (a * _transform(model, x) + b)) ** 2 for x, y in zip(xs, ys))
    sst = math.fsum((y - ybar) ** 2 for y in ys)
    if sst == 0:
        if ssr == 0:
            return 1.0
        raise DegenerateError("R^2 undefined: constant y with nonzero residuals")
    return 1.0 - ssr / sst


def _ols(xs: list[float], ys: list[float]) -> tuple[float, float]:
    n = len(xs)
    xbar = math.fsum(xs) / n
    ybar = math.fsum(ys) / n
    sxx = math.fsum((x - xbar) ** 2 for x in xs)
    if sxx == 0:
        raise DegenerateError("all x values are equal; slope undefined")
    sxy = math.fsum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    a = sxy / sxx
    return a, ybar - a * xbar


def fit_linear(points) -> FitResult:
    xs, ys = _points(points)
    a, b = _ols(xs, ys)
    return FitResult("Linear", a, b, r_squared(zip(xs, ys), "Linear", a, b), len(xs))


def fit_log(points) -> FitResult:
    """Natural-log fit; equivalent to :func:`fit_linear` on ``(ln x, y)``."""
    xs, ys = _points(points)
    lx = [_transform("Log", x) for x in xs]
    a, b = _ols(lx, ys)
    return FitResult("Log", a, b, r_squared(zip(lx, ys), "Linear", a, b), len(xs))


def fit(points, model: str) -> FitResult:
    if model == "Linear":
        return fit_linear(points)
    if model == "Log":
        return fit_log(points)
    raise ArgumentError(f"unknown model {model!r}; expected one of {MODELS}")
