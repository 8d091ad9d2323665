"""radiomap: global radiomics, voxel-wise parametric maps, and an
FDR + SVM-RFE feature-selection pipeline over 3D volumes."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DataError, EmptyMaskError, FormatError,
                     RadiomapError, StratificationError, UnsupportedEncodingError,
                     UsageError)
from .features import (ExtractionConfig, FeatureVector, extract_global,
                       first_order_features, glcm_features, glrlm_features,
                       ngtdm_features, shape_features)
from .fusion import AttentionConfig, attn_invariant_suite, cross_attention_forward
from .grid_io import (MaskGrid, VolumeGrid, read_mask, read_volume, write_mask,
                      write_volume)
from .metrics import ScoredCases, auroc, average_precision, paired_permutation_test
from .parametric import (BenchConfig, BenchReport, DEFAULT_MAP_FEATURES,
                         ParametricMap, bench_maps, extract_map_fast,
                         extract_map_naive, map_feature_names)
from .phantoms import PhantomSpec, make_cohort, make_phantom, write_cohort_volumes
from .preprocess import (DiscretizedVolume, RoiBox, crop, discretize, log_filter,
                         resample, roi_from_mask)
from .selection import (FdrCorrelationFilter, FeatureTable, LinearSvmClassifier,
                        SelectionReport, SvmRfe, ZScoreScaler, bh_fdr,
                        impute_median, pointbiserial_pvalues, rfe,
                        select_features_cv, stratified_folds, svm_objective,
                        svm_train, zscore_fit_apply)
from .texture import DIRECTIONS_13, GlcmSet, GlrlmSet, Ngtdm, glcm, glrlm, ngtdm

__all__ = [name for name in dir() if not name.startswith("_")]
