#include "scan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>

namespace scan {

namespace {

struct Scored {
    double score;
    std::uint32_t index;
};

bool better(const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
}

// Top-k gallery rows by cosine against `query`, optionally excluding one
// index (the query itself for retrieval).
std::vector<std::uint32_t> top_k_cosine(const EmbeddingMatrix& gallery,
                                        std::span<const double> query, std::size_t k,
                                        std::size_t exclude) {
    std::vector<Scored> scored;
    scored.reserve(gallery.n);
    for (std::size_t j = 0; j < gallery.n; ++j) {
        if (j == exclude) continue;
        scored.push_back({row_dot(query, gallery.row(j)), static_cast<std::uint32_t>(j)});
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);
    std::vector<std::uint32_t> result(take);
    for (std::size_t r = 0; r < take; ++r) result[r] = scored[r].index;
    return result;
}

constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();

}  // namespace

double knn_probe(const EmbeddingMatrix& train, const std::vector<std::int32_t>& train_labels,
                 const EmbeddingMatrix& test, const std::vector<std::int32_t>& test_labels,
                 std::size_t k) {
    if (train.n == 0) throw EmptyTrainSet("knn_probe: empty train set");
    if (train_labels.size() != train.n || test_labels.size() != test.n) {
        throw LabelMismatch("knn_probe: label counts do not match the embeddings");
    }
    if (train.d != test.d) throw DimensionMismatch("knn_probe: train/test dimensions differ");
    if (k < 1) throw BadShape("knn_probe: k must be >= 1");

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.n; ++i) {
        const auto neighbors = top_k_cosine(train, test.row(i), k, kNoExclusion);
        std::map<std::int32_t, std::size_t> votes;
        for (std::uint32_t j : neighbors) ++votes[train_labels[j]];
        std::int32_t winner = 0;
        std::size_t best = 0;
        for (const auto& [label, count] : votes) {  // ascending label: ties keep the lower id
            if (count > best) {
                best = count;
                winner = label;
            }
        }
        if (winner == test_labels[i]) ++correct;
    }
    return test.n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.n);
}

namespace {

// Mean cross-entropy of softmax(W x + b) and its gradient, all classes.
struct SoftmaxModel {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> w;  // classes x dim
    std::vector<double> b;
};

double softmax_objective(const SoftmaxModel& model, const EmbeddingMatrix& x,
                         const std::vector<std::int32_t>& y, SoftmaxModel* grad) {
    const std::size_t c = model.classes;
    if (grad != nullptr) {
        grad->w.assign(model.w.size(), 0.0);
        grad->b.assign(model.b.size(), 0.0);
    }
    std::vector<double> logits(c);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(x.n);
    for (std::size_t i = 0; i < x.n; ++i) {
        const auto row = x.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            logits[j] = model.b[j] + row_dot({model.w.data() + j * model.dim, model.dim}, row);
        }
        const double max_logit = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(logits[j] - max_logit);
        const std::size_t label = static_cast<std::size_t>(y[i]);
        total += -(logits[label] - max_logit) + std::log(denom);
        if (grad != nullptr) {
            for (std::size_t j = 0; j < c; ++j) {
                const double p = std::exp(logits[j] - max_logit) / denom;
                const double delta = (p - (j == label ? 1.0 : 0.0)) * inv_n;
                grad->b[j] += delta;
                double* gw = grad->w.data() + j * model.dim;
                for (std::size_t t = 0; t < model.dim; ++t) gw[t] += delta * row[t];
            }
        }
    }
    return total * inv_n;
}

double max_abs(const SoftmaxModel& grad) {
    double m = 0.0;
    for (double v : grad.w) m = std::max(m, std::fabs(v));
    for (double v : grad.b) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace

LinearProbeResult linear_probe(const EmbeddingMatrix& train,
                               const std::vector<std::int32_t>& train_labels,
                               const EmbeddingMatrix& test,
                               const std::vector<std::int32_t>& test_labels,
                               const LinearProbeConfig& config) {
    if (train.n == 0) throw EmptyTrainSet("linear_probe: empty train set");
    if (train_labels.size() != train.n || test_labels.size() != test.n) {
        throw LabelMismatch("linear_probe: label counts do not match the embeddings");
    }
    if (train.d != test.d) throw DimensionMismatch("linear_probe: train/test dimensions differ");

    std::int32_t max_label = 0;
    for (std::int32_t v : train_labels) max_label = std::max(max_label, v);
    for (std::int32_t v : test_labels) max_label = std::max(max_label, v);
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

    LinearProbeResult result;
    std::int32_t first = train_labels.front();
    result.degenerate =
        std::all_of(train_labels.begin(), train_labels.end(),
                    [first](std::int32_t v) { return v == first; });

    SoftmaxModel model{classes, train.d, std::vector<double>(classes * train.d, 0.0),
                       std::vector<double>(classes, 0.0)};
    SoftmaxModel grad = model;

    double lr = config.learning_rate;
    double objective = softmax_objective(model, train, train_labels, &grad);
    result.objective_trace.push_back(objective);

    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        result.final_gradient_norm = max_abs(grad);
        if (result.final_gradient_norm <= config.gradient_tolerance) {
            result.converged = true;
            break;
        }

        // Step with halving until the objective does not increase.
        SoftmaxModel next = model;
        double next_objective = objective;
        while (true) {
            for (std::size_t i = 0; i < model.w.size(); ++i) {
                next.w[i] = model.w[i] - lr * grad.w[i];
            }
            for (std::size_t i = 0; i < model.b.size(); ++i) {
                next.b[i] = model.b[i] - lr * grad.b[i];
            }
            next_objective = softmax_objective(next, train, train_labels, nullptr);
            if (next_objective <= objective || lr < 1e-16) break;
            lr /= 2.0;
        }
        if (next_objective > objective) break;  // step size exhausted

        model = std::move(next);
        objective = softmax_objective(model, train, train_labels, &grad);
        result.objective_trace.push_back(objective);
        result.iterations = iter + 1;
    }
    if (!result.converged) {
        result.final_gradient_norm = max_abs(grad);
        result.converged = result.final_gradient_norm <= config.gradient_tolerance;
    }
    result.final_objective = objective;

    // Top-1 accuracy; argmax ties resolve to the lower class id.
    std::size_t correct = 0;
    std::vector<double> logits(classes);
    for (std::size_t i = 0; i < test.n; ++i) {
        const auto row = test.row(i);
        std::size_t arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < classes; ++j) {
            const double v =
                model.b[j] + row_dot({model.w.data() + j * model.dim, model.dim}, row);
            if (v > best) {
                best = v;
                arg = j;
            }
        }
        if (static_cast<std::int32_t>(arg) == test_labels[i]) ++correct;
    }
    result.accuracy =
        test.n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.n);
    return result;
}

PurityReport retrieval_report(const EmbeddingMatrix& gallery, const LabelVector& labels,
                              std::span<const std::size_t> queries, std::size_t k) {
    if (labels.size() != gallery.n) {
        throw LabelMismatch("retrieval_report: label count does not match the gallery");
    }
    require_unit_rows(gallery, "retrieval_report");

    PurityReport report;
    report.has_modes = labels.has_modes();
    report.k = k;

    for (std::size_t q : queries) {
        if (q >= gallery.n) {
            throw IndexOutOfRange("retrieval_report: query " + std::to_string(q) +
                                  " out of range");
        }
        RetrievalEntry entry;
        entry.query = q;
        entry.retrieved = top_k_cosine(gallery, gallery.row(q), k, q);

        std::size_t same_class = 0, same_mode = 0, same_both = 0;
        for (std::uint32_t j : entry.retrieved) {
            const bool class_match = labels.labels[j] == labels.labels[q];
            if (class_match) ++same_class;
            if (report.has_modes) {
                const bool mode_match = labels.modes[j] == labels.modes[q];
                if (mode_match) ++same_mode;
                if (class_match && mode_match) ++same_both;
            }
        }
        const double denom = entry.retrieved.empty()
                                 ? 1.0
                                 : static_cast<double>(entry.retrieved.size());
        entry.class_purity = static_cast<double>(same_class) / denom;
        if (report.has_modes) {
            entry.mode_purity = static_cast<double>(same_mode) / denom;
            entry.joint_purity = static_cast<double>(same_both) / denom;
        }
        report.per_query.push_back(std::move(entry));
    }

    if (!report.per_query.empty()) {
        const double inv = 1.0 / static_cast<double>(report.per_query.size());
        for (const auto& entry : report.per_query) {
            report.mean_class_purity += entry.class_purity * inv;
            report.mean_mode_purity += entry.mode_purity * inv;
            report.mean_joint_purity += entry.joint_purity * inv;
        }
    }
    return report;
}

void write_report_csv(const PurityReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Io("cannot open " + path.string() + " for writing");

    out << (report.has_modes ? "query,retrieved,class_purity,mode_purity,joint_purity\n"
                             : "query,retrieved,class_purity\n");
    char buf[64];
    for (const auto& entry : report.per_query) {
        out << entry.query << ',';
        for (std::size_t r = 0; r < entry.retrieved.size(); ++r) {
            if (r > 0) out << ';';
            out << entry.retrieved[r];
        }
        std::snprintf(buf, sizeof(buf), ",%.17g", entry.class_purity);
        out << buf;
        if (report.has_modes) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", entry.mode_purity,
                          entry.joint_purity);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw Io("write failed: " + path.string());
}

}  // namespace scan
