"""Anomaly detectors for trace feature vectors."""

from .base import (
    MODEL_FORMAT,
    ONE_CLASS,
    SUPERVISED,
    UNSUPERVISED,
    DetectorKind,
    DetectorModel,
    FitError,
    StandardScaler,
    load_model,
    predict,
    regime,
    save_model,
)
from .iforest import IsolationForest, average_path_length, fit_isolation_forest
from .kmeans import KMeansDetector, fit_kmeans
from .linear import GaussianNaiveBayes, LogisticRegression, fit_logistic, fit_naive_bayes
from .svm import SVDD, SupportVectorMachine, fit_svdd, fit_svm
from .trees import GradientBoostedTrees, RandomForest, fit_gbt, fit_random_forest


def fit_detector(kind: DetectorKind, X, y=None, params=None) -> DetectorModel:
    """Dispatch to the fitter for ``kind``; one-class and clustering kinds ignore ``y``."""
    kind = DetectorKind(kind)
    if kind is DetectorKind.GBT:
        return fit_gbt(X, y, params)
    if kind is DetectorKind.RANDOM_FOREST:
        return fit_random_forest(X, y, params)
    if kind is DetectorKind.LOGISTIC:
        return fit_logistic(X, y, params)
    if kind is DetectorKind.SVM:
        return fit_svm(X, y, params)
    if kind is DetectorKind.NAIVE_BAYES:
        return fit_naive_bayes(X, y, params)
    if kind is DetectorKind.SVDD:
        return fit_svdd(X, params)
    if kind is DetectorKind.ISOLATION_FOREST:
        return fit_isolation_forest(X, params)
    return fit_kmeans(X, params)


__all__ = [
    "MODEL_FORMAT",
    "ONE_CLASS",
    "SUPERVISED",
    "UNSUPERVISED",
    "DetectorKind",
    "DetectorModel",
    "FitError",
    "GaussianNaiveBayes",
    "GradientBoostedTrees",
    "IsolationForest",
    "KMeansDetector",
    "LogisticRegression",
    "RandomForest",
    "SVDD",
    "StandardScaler",
    "SupportVectorMachine",
    "average_path_length",
    "fit_detector",
    "fit_gbt",
    "fit_isolation_forest",
    "fit_kmeans",
    "fit_logistic",
    "fit_naive_bayes",
    "fit_random_forest",
    "fit_svdd",
    "fit_svm",
    "load_model",
    "predict",
    "regime",
    "save_model",
]
