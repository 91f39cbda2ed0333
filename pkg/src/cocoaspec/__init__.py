"""cocoaspec: VIS/NIR spectral processing and per-property regression
for cocoa bean quality estimation.

The processing chain is: ingest raw scans, reject conveyor-belt spectra
by spectral angle, calibrate to reflectance against white/black
references, crop to the analysis windows, augment each batch with
bootstrap subset means, then train and evaluate per-property regressors
(k-NN, random forest, support vector regression, and small neural
networks trained with a built-in autodiff engine).
"""

__version__ = "0.1.0"
