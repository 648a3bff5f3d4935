#ifndef AUDIT_REPAIR_H
#define AUDIT_REPAIR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum ArStatus {
  AR_STATUS_OK = 0,
  AR_STATUS_NULL_POINTER = 1,
  AR_STATUS_INVALID_ARGUMENT = 2,
  AR_STATUS_IO = 3,
  AR_STATUS_DATA = 4,
  AR_STATUS_METRICS = 5,
  AR_STATUS_FOREST = 6,
  AR_STATUS_CAUSAL = 7,
  AR_STATUS_REPAIR = 8,
  AR_STATUS_PANIC = 99,
} ArStatus;

// Opaque dataset handle.
typedef struct ArDataset ArDataset;

// Opaque random-forest handle.
typedef struct ArForest ArForest;

// Callback counts by age group.
typedef struct ArGroupCounts {
  uint64_t young_pos;
  uint64_t young_neg;
  uint64_t older_pos;
  uint64_t older_neg;
} ArGroupCounts;

// Budget-thresholded fairness summary.
typedef struct ArEvalReport {
  double auc;
  double fpr_young;
  double fpr_old;
  double fprd;
} ArEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until
// the next failing call on the same thread.
const char *ar_last_error(void);

// Loads an audit CSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ArStatus ar_dataset_load_csv(const char *path, struct ArDataset **out);

// Generates the synthetic replica of the published audit counts.
// `n_records` of 0 keeps the replica size.
//
// # Safety
// `out` must be writable.
enum ArStatus ar_dataset_generate(uint64_t seed, uintptr_t n_records, struct ArDataset **out);

// # Safety
// `data` must be NULL or a handle from this library not yet freed.
void ar_dataset_free(struct ArDataset *data);

// Record count, or 0 for NULL.
//
// # Safety
// `data` must be NULL or a live handle.
uintptr_t ar_dataset_len(const struct ArDataset *data);

// # Safety
// `data` must be a live handle; `out` must be writable.
enum ArStatus ar_dataset_counts(const struct ArDataset *data, struct ArGroupCounts *out);

// Copies callbacks (`labels`) and age groups (`groups`) into caller
// buffers of `n` entries each; either may be NULL to skip it.
//
// # Safety
// Non-NULL buffers must hold `n` bytes; `n` must equal the record count.
enum ArStatus ar_dataset_columns(const struct ArDataset *data,
                                 uint8_t *labels,
                                 uint8_t *groups,
                                 uintptr_t n);

// # Safety
// `data` must be a live handle; `path` a NUL-terminated string.
enum ArStatus ar_dataset_write_csv(const struct ArDataset *data, const char *path);

// Mann-Whitney AUC.
//
// # Safety
// `scores` and `labels` must hold `n` entries; `out` must be writable.
enum ArStatus ar_auc(const double *scores, const uint8_t *labels, uintptr_t n, double *out);

// Marks the `round(budget_rate * n)` highest scores with 1 in `out`.
//
// # Safety
// `scores` and `out` must hold `n` entries.
enum ArStatus ar_threshold(const double *scores, uintptr_t n, double budget_rate, uint8_t *out);

// AUC and false-positive-rate difference at a callback budget.
//
// # Safety
// `scores`, `labels` and `groups` must hold `n` entries; `out` must be
// writable.
enum ArStatus ar_evaluate(const double *scores,
                          const uint8_t *labels,
                          const uint8_t *groups,
                          uintptr_t n,
                          double budget_rate,
                          struct ArEvalReport *out);

// Fits a random forest on a row-major `n_rows x n_cols` matrix.
//
// # Safety
// `x` must hold `n_rows * n_cols` values, `y` `n_rows`; `out` writable.
enum ArStatus ar_forest_fit(const double *x,
                            const uint8_t *y,
                            uintptr_t n_rows,
                            uintptr_t n_cols,
                            uintptr_t n_estimators,
                            uint64_t seed,
                            struct ArForest **out);

// Class-1 probabilities for each row of `x` into `out`.
//
// # Safety
// `model` must be live; `x` holds `n_rows * n_cols` values, `out` `n_rows`.
enum ArStatus ar_forest_predict(const struct ArForest *model,
                                const double *x,
                                uintptr_t n_rows,
                                uintptr_t n_cols,
                                double *out);

// # Safety
// `model` must be NULL or a live handle.
void ar_forest_free(struct ArForest *model);

// Fits a virtual-twins forest on the whole dataset and writes each
// record's estimated effect of being Young into `tau`.
//
// # Safety
// `data` must be live; `tau` must hold `n` entries, `n` the record count.
enum ArStatus ar_ite(const struct ArDataset *data,
                     uintptr_t n_estimators,
                     uint64_t seed,
                     double *tau,
                     uintptr_t n);

// Flips callback labels in order of `tau` until group rates match.
// Writes a new dataset to `out` and the number of flipped pairs to
// `iterations` (which may be NULL).
//
// # Safety
// `data` must be live; `tau` holds `n` entries; `out` writable.
enum ArStatus ar_repair_ite(const struct ArDataset *data,
                            const double *tau,
                            uintptr_t n,
                            struct ArDataset **out,
                            uintptr_t *iterations);

// Deletes random older non-callbacks until the older callback rate
// reaches the young one. `removed` (may be NULL) receives the count.
//
// # Safety
// `data` must be live; `out` writable.
enum ArStatus ar_equalize_base_rate(const struct ArDataset *data,
                                    uint64_t seed,
                                    struct ArDataset **out,
                                    uintptr_t *removed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUDIT_REPAIR_H */
