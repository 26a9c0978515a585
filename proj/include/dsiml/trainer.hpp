#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsiml/codes.hpp"
#include "dsiml/error.hpp"
#include "dsiml/interactions.hpp"
#include "dsiml/objective.hpp"

namespace dsiml {

struct TrainRecord {
    std::uint32_t iteration = 0;  // epoch or outer iteration, 1-based
    std::string phase;            // "epoch" | "phi-update" | "user-codes" | "eta-update" | "item-codes"
    double bound = 0.0;
    double objective = 0.0;
    double seconds = 0.0;  // wall time since training started
};

struct TrainReport {
    std::vector<TrainRecord> records;
    bool converged = false;
    std::uint32_t iterations = 0;
    std::uint64_t user_checksum = 0;
    std::uint64_t item_checksum = 0;
};

/// Divergence during gradient descent; carries the partial report.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& msg, TrainReport partial)
        : NumericalError(msg), report(std::move(partial)) {}

    TrainReport report;
};

struct SimlModel {
    EmbeddingMatrix user_factors;
    EmbeddingMatrix item_factors;
    TrainReport report;
};

struct DsimlModel {
    BinaryCodeMatrix user_codes;
    BinaryCodeMatrix item_codes;
    TrainReport report;
};

/// The seeded random embeddings every embedding trainer starts from.
std::pair<EmbeddingMatrix, EmbeddingMatrix> initial_embeddings(std::size_t n_users,
                                                               std::size_t n_items,
                                                               const Hyperparams& hp);

/// Mini-batch SGD on the continuous objective, batches grouped by user.
SimlModel train_siml(const InteractionSet& data, const Hyperparams& hp);

/// Same budget and batching, fixed-margin triplet hinge objective.
SimlModel train_cml(const InteractionSet& data, const Hyperparams& hp);

/// Alternating optimization of the binary model: sign-initialize from a
/// SIML run (or the given embeddings), then per outer iteration refresh the
/// variational parameters and solve every user's and item's BQP warm-started
/// at its current code. The bound never increases within an iteration.
DsimlModel train_dsiml(const InteractionSet& data, const Hyperparams& hp);
DsimlModel train_dsiml(const InteractionSet& data, const Hyperparams& hp,
                       const EmbeddingMatrix& init_users, const EmbeddingMatrix& init_items);

}  // namespace dsiml
