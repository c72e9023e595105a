"""Random-forest decision explanations in proximity-distance space."""

__version__ = "0.1.0"

from .audit import (ContingencyTable, PairedSample, audit_summary, chi_square_2x2,
                    collect_pairs, kendall_tau, pearson_r, sign_table, spearman_rho)
from .contribution import (Closeness, ContributionReport, FeatureContribution,
                           PathContext, build_path_context, explain,
                           fast_leaf_signature, feature_contribution, flip,
                           ingroup_vector, misclassification_diff)
from .dataset import (BinarizationSpec, BinaryDataset, RawDataset, SourceFeature,
                      ThresholdRule, apply_binarizer, binarize_dataset, fit_binarizer,
                      load_csv, load_idx, split_holdout, write_idx_images,
                      write_idx_labels)
from .forest import (DecisionTree, Forest, TrainConfig, accuracy, best_split,
                     gini_impurity, leaf_signature, leaf_signatures_batch, load_model,
                     predict, predict_batch, save_model, train)
from .proximity import (ProximityStore, build_store, distance_vector,
                        export_distance_matrix, group_mean_sq_distance,
                        outlier_scores, proximity)
from .report import (export_heatmap_pgm, export_report_csv, export_report_json,
                     read_pgm, report_to_dict, values_to_pixels)
