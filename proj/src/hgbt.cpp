#include "herdgate/hgbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "herdgate/error.hpp"
#include "herdgate/parallel.hpp"
#include "herdgate/stats.hpp"

namespace herdgate::hgbt {

using nlohmann::ordered_json;

void Hyperparameters::validate() const {
    require(learning_rate >= 0.01 && learning_rate <= 1.0,
            "hyperparameters: learning_rate out of [0.01, 1.0]");
    require(max_leaf_nodes >= 2 && max_leaf_nodes <= 2000,
            "hyperparameters: max_leaf_nodes out of [2, 2000]");
    require(n_iterations >= 0, "hyperparameters: n_iterations negative");
    require(l2_regularization >= 0.0, "hyperparameters: l2_regularization negative");
    require(min_samples_leaf >= 1, "hyperparameters: min_samples_leaf must be >= 1");
    require(max_bins >= 2 && max_bins <= 255, "hyperparameters: max_bins out of [2, 255]");
}

std::int32_t FeatureBins::bin_of_numeric(double value) const {
    if (n_value_bins == 0) return missing_bin();
    // Bin b holds x <= edges[b]; everything above the last edge is the top bin.
    const auto it = std::lower_bound(edges.begin(), edges.end(), value);
    return static_cast<std::int32_t>(it - edges.begin());
}

std::int32_t FeatureBins::bin_of_category(std::string_view label) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
        if (categories[i] == label) return category_bin[i];
    return overflow_bin >= 0 ? overflow_bin : missing_bin();
}

std::vector<std::string> Ensemble::feature_names() const {
    std::vector<std::string> names;
    names.reserve(bins.features.size());
    for (const auto& f : bins.features) names.push_back(f.name);
    return names;
}

BinMapper fit_bins(const DataMatrix& data, int max_bins) {
    require(data.n_rows >= 1, "fit_bins: empty data");
    require(max_bins >= 2 && max_bins <= 255, "fit_bins: max_bins out of [2, 255]");
    BinMapper out;
    out.features.reserve(data.cols.size());
    for (const auto& col : data.cols) {
        FeatureBins fb;
        fb.name = col.name;
        fb.kind = col.kind;
        if (col.kind == ColumnKind::numeric) {
            std::vector<double> vals;
            vals.reserve(data.n_rows);
            for (std::size_t i = 0; i < data.n_rows; ++i) {
                if (!col.present[i]) continue;
                require(std::isfinite(col.num[i]),
                        "fit_bins: non-finite value in feature '" + col.name + "'");
                vals.push_back(col.num[i]);
            }
            if (vals.empty()) {
                fb.n_value_bins = 0;
                out.warnings.push_back("feature '" + col.name +
                                       "' has no non-missing values; single missing bin");
            } else {
                std::sort(vals.begin(), vals.end());
                std::vector<double> distinct(vals);
                distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
                if (static_cast<int>(distinct.size()) <= max_bins) {
                    // One bin per distinct value; bin b holds x <= distinct[b].
                    fb.edges.assign(distinct.begin(), distinct.end() - 1);
                } else {
                    const std::size_t n = vals.size();
                    for (int k = 1; k < max_bins; ++k) {
                        const std::size_t pos = (static_cast<std::size_t>(k) * n) / max_bins;
                        fb.edges.push_back(vals[std::min(pos, n - 1)]);
                    }
                    fb.edges.erase(std::unique(fb.edges.begin(), fb.edges.end()), fb.edges.end());
                    while (!fb.edges.empty() && fb.edges.back() >= vals.back()) fb.edges.pop_back();
                }
                fb.n_value_bins = static_cast<std::int32_t>(fb.edges.size()) + 1;
            }
        } else {
            std::vector<std::int64_t> freq(col.labels.size(), 0);
            for (std::size_t i = 0; i < data.n_rows; ++i)
                if (col.present[i]) ++freq[static_cast<std::size_t>(col.cat[i])];
            std::vector<std::int32_t> observed;
            for (std::size_t c = 0; c < freq.size(); ++c)
                if (freq[c] > 0) observed.push_back(static_cast<std::int32_t>(c));

            fb.categories = col.labels;
            fb.category_bin.assign(col.labels.size(), -1);
            if (observed.empty()) {
                fb.n_value_bins = 0;
                fb.overflow_bin = -1;
                out.warnings.push_back("feature '" + col.name +
                                       "' has no non-missing values; single missing bin");
            } else if (static_cast<int>(observed.size()) <= max_bins) {
                // One bin per observed category, in code order; the rarest
                // category's bin doubles as the overflow target for labels
                // first seen at prediction time.
                for (std::size_t k = 0; k < observed.size(); ++k)
                    fb.category_bin[static_cast<std::size_t>(observed[k])] =
                        static_cast<std::int32_t>(k);
                fb.n_value_bins = static_cast<std::int32_t>(observed.size());
                std::int32_t rarest = observed[0];
                for (std::int32_t c : observed)
                    if (freq[static_cast<std::size_t>(c)] < freq[static_cast<std::size_t>(rarest)])
                        rarest = c;
                fb.overflow_bin = fb.category_bin[static_cast<std::size_t>(rarest)];
            } else {
                // Keep the most frequent max_bins-1 categories; the rest share
                // a dedicated rarest-categories bin.
                std::vector<std::int32_t> order(observed);
                std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
                    if (freq[static_cast<std::size_t>(a)] != freq[static_cast<std::size_t>(b)])
                        return freq[static_cast<std::size_t>(a)] > freq[static_cast<std::size_t>(b)];
                    return a < b;
                });
                std::vector<std::int32_t> kept(order.begin(), order.begin() + (max_bins - 1));
                std::sort(kept.begin(), kept.end());
                for (std::size_t k = 0; k < kept.size(); ++k)
                    fb.category_bin[static_cast<std::size_t>(kept[k])] =
                        static_cast<std::int32_t>(k);
                fb.overflow_bin = max_bins - 1;
                for (std::int32_t c : observed)
                    if (fb.category_bin[static_cast<std::size_t>(c)] < 0)
                        fb.category_bin[static_cast<std::size_t>(c)] = fb.overflow_bin;
                fb.n_value_bins = max_bins;
            }
            // Labels interned in the matrix but never observed present route
            // to the overflow bin.
            for (auto& b : fb.category_bin)
                if (b < 0) b = fb.overflow_bin >= 0 ? fb.overflow_bin : fb.missing_bin();
        }
        require(fb.n_bins() <= 256, "fit_bins: bin index overflow");
        out.features.push_back(std::move(fb));
    }
    return out;
}

std::vector<std::uint8_t> bin_rows(const BinMapper& bins, const DataMatrix& data) {
    const std::size_t n = data.n_rows;
    const std::size_t f_count = bins.features.size();
    std::vector<std::uint8_t> binned(n * f_count);
    for (std::size_t f = 0; f < f_count; ++f) {
        const FeatureBins& fb = bins.features[f];
        const Column* col = data.find(fb.name);
        require(col != nullptr, "data is missing feature '" + fb.name + "'");
        require(col->kind == fb.kind, "feature '" + fb.name + "' kind mismatch");
        std::uint8_t* dst = binned.data() + f * n;
        if (fb.kind == ColumnKind::numeric) {
            for (std::size_t i = 0; i < n; ++i)
                dst[i] = static_cast<std::uint8_t>(
                    col->present[i] ? fb.bin_of_numeric(col->num[i]) : fb.missing_bin());
        } else {
            std::vector<std::int32_t> translate(col->labels.size());
            for (std::size_t c = 0; c < col->labels.size(); ++c)
                translate[c] = fb.bin_of_category(col->labels[c]);
            for (std::size_t i = 0; i < n; ++i)
                dst[i] = static_cast<std::uint8_t>(
                    col->present[i] ? translate[static_cast<std::size_t>(col->cat[i])]
                                    : fb.missing_bin());
        }
    }
    return binned;
}

namespace {

struct HistBin {
    double g = 0.0;
    double h = 0.0;
    std::int64_t cnt = 0;
};

using Histogram = std::vector<std::vector<HistBin>>;  // [feature][bin]

struct SplitChoice {
    double gain = -std::numeric_limits<double>::infinity();
    std::int32_t feature = -1;
    std::int32_t threshold_bin = -1;
    std::vector<std::int32_t> left_bins;
    bool missing_left = true;
    bool valid() const { return feature >= 0; }
};

struct Candidate {
    std::int32_t node_id = -1;
    int seq = 0;
    std::vector<std::uint32_t> rows;
    double sum_g = 0.0, sum_h = 0.0;
    Histogram hist;
    SplitChoice best;
};

Histogram make_histogram(const BinMapper& bins) {
    Histogram h(bins.features.size());
    for (std::size_t f = 0; f < bins.features.size(); ++f)
        h[f].assign(static_cast<std::size_t>(bins.features[f].n_bins()), HistBin{});
    return h;
}

void build_histogram(Histogram& hist, const std::vector<std::uint32_t>& rows,
                     const std::vector<std::uint8_t>& binned, std::size_t n_rows,
                     const std::vector<double>& g, const std::vector<double>& h, int threads) {
    parallel_for(hist.size(), threads, [&](std::size_t f) {
        const std::uint8_t* codes = binned.data() + f * n_rows;
        auto& fh = hist[f];
        for (std::uint32_t r : rows) {
            HistBin& b = fh[codes[r]];
            b.g += g[r];
            b.h += h[r];
            b.cnt += 1;
        }
    });
}

void subtract_histogram(Histogram& parent_into_sibling, const Histogram& child, int threads) {
    parallel_for(parent_into_sibling.size(), threads, [&](std::size_t f) {
        auto& pf = parent_into_sibling[f];
        const auto& cf = child[f];
        for (std::size_t b = 0; b < pf.size(); ++b) {
            pf[b].g -= cf[b].g;
            pf[b].h -= cf[b].h;
            pf[b].cnt -= cf[b].cnt;
        }
    });
}

// Split search over one leaf's histograms.  Candidates are enumerated in a
// fixed order (feature ascending, then threshold/prefix ascending, missing
// sent left before right) and only a strictly larger gain replaces the
// incumbent, which realizes the documented tie-break.
SplitChoice find_best_split(const Candidate& cand, const BinMapper& bins, double lambda,
                            int min_samples_leaf) {
    SplitChoice best;
    const double total_g = cand.sum_g;
    const double total_h = cand.sum_h;
    const std::int64_t total_cnt = static_cast<std::int64_t>(cand.rows.size());
    if (total_h + lambda <= 0.0) return best;
    const double parent_term = total_g * total_g / (total_h + lambda);

    for (std::size_t f = 0; f < bins.features.size(); ++f) {
        const FeatureBins& fb = bins.features[f];
        const auto& fh = cand.hist[f];
        const std::int32_t n_value = fb.n_value_bins;
        if (n_value < 2 && !(n_value == 1 && fh[static_cast<std::size_t>(fb.missing_bin())].cnt > 0))
            continue;
        const HistBin& miss = fh[static_cast<std::size_t>(fb.missing_bin())];

        // Scan order over value bins: natural for numeric, gradient/hessian
        // ratio order for categorical.
        std::vector<std::int32_t> order(static_cast<std::size_t>(n_value));
        std::iota(order.begin(), order.end(), 0);
        if (fb.kind == ColumnKind::categorical) {
            std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
                const auto& ba = fh[static_cast<std::size_t>(a)];
                const auto& bb = fh[static_cast<std::size_t>(b)];
                const double ka = ba.h > 0.0 ? ba.g / ba.h : 0.0;
                const double kb = bb.h > 0.0 ? bb.g / bb.h : 0.0;
                if (ka != kb) return ka < kb;
                return a < b;
            });
        }

        double left_g = 0.0, left_h = 0.0;
        std::int64_t left_cnt = 0;
        for (std::int32_t t = 0; t + 1 <= n_value; ++t) {
            const HistBin& vb = fh[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];
            left_g += vb.g;
            left_h += vb.h;
            left_cnt += vb.cnt;
            for (int miss_left = 1; miss_left >= 0; --miss_left) {
                const bool last_threshold = t + 1 == n_value;
                // The all-value-bins-left split only separates missing from
                // non-missing, so it requires the missing bin on the right.
                if (last_threshold && miss_left) continue;
                const double gl = left_g + (miss_left ? miss.g : 0.0);
                const double hl = left_h + (miss_left ? miss.h : 0.0);
                const std::int64_t cl = left_cnt + (miss_left ? miss.cnt : 0);
                const double gr = total_g - gl;
                const double hr = total_h - hl;
                const std::int64_t cr = total_cnt - cl;
                if (cl < min_samples_leaf || cr < min_samples_leaf) continue;
                if (cl == 0 || cr == 0) continue;
                if (hl + lambda <= 0.0 || hr + lambda <= 0.0) continue;
                const double gain =
                    gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_term;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<std::int32_t>(f);
                    best.missing_left = miss_left != 0;
                    if (fb.kind == ColumnKind::numeric) {
                        best.threshold_bin = t;
                        best.left_bins.clear();
                    } else {
                        best.threshold_bin = -1;
                        best.left_bins.assign(order.begin(), order.begin() + t + 1);
                        std::sort(best.left_bins.begin(), best.left_bins.end());
                    }
                }
            }
        }
    }
    if (!(best.gain > 0.0)) best.feature = -1;
    return best;
}

double leaf_value(double sum_g, double sum_h, double lambda) {
    return (sum_h + lambda) > 0.0 ? -sum_g / (sum_h + lambda) : 0.0;
}

} // namespace

Ensemble train(const DataMatrix& data, const std::vector<std::uint8_t>& labels,
               const Hyperparameters& hp, std::uint64_t seed, const TrainOptions& opts) {
    hp.validate();
    data.validate();
    const std::size_t n = data.n_rows;
    require(labels.size() == n, "train: labels/rows size mismatch");
    require(n >= 2, "train: need at least 2 rows");
    std::size_t n_pos = 0;
    for (auto y : labels) {
        require(y == 0 || y == 1, "train: labels must be binary");
        n_pos += y;
    }
    require(n_pos > 0 && n_pos < n, "train: degenerate labels (single class)");

    Ensemble model;
    model.hp = hp;
    model.seed = seed;
    model.learning_rate = hp.learning_rate;
    model.bins = fit_bins(data, hp.max_bins);
    const std::vector<std::uint8_t> binned = bin_rows(model.bins, data);

    const double prevalence = static_cast<double>(n_pos) / static_cast<double>(n);
    model.base_score = stats::logit(prevalence);

    std::vector<double> score(n, model.base_score);
    std::vector<double> g(n), h(n), prob(n);
    const double lambda = hp.l2_regularization;
    const int threads = opts.threads;

    for (int iter = 0; iter < hp.n_iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = stats::sigmoid(score[i]);
            prob[i] = p;
            g[i] = p - static_cast<double>(labels[i]);
            h[i] = p * (1.0 - p);
        }

        Tree tree;
        tree.nodes.emplace_back();
        std::vector<std::unique_ptr<Candidate>> active;
        int seq_counter = 0;

        auto make_candidate = [&](std::int32_t node_id, std::vector<std::uint32_t> rows,
                                  Histogram hist) {
            auto c = std::make_unique<Candidate>();
            c->node_id = node_id;
            c->seq = seq_counter++;
            c->rows = std::move(rows);
            // Canonical stats: row-order sums over the candidate's own rows.
            for (std::uint32_t r : c->rows) {
                c->sum_g += g[r];
                c->sum_h += h[r];
            }
            c->hist = std::move(hist);
            c->best = find_best_split(*c, model.bins, lambda, hp.min_samples_leaf);
            return c;
        };

        {
            std::vector<std::uint32_t> all(n);
            std::iota(all.begin(), all.end(), 0u);
            Histogram hist = make_histogram(model.bins);
            build_histogram(hist, all, binned, n, g, h, threads);
            active.push_back(make_candidate(0, std::move(all), std::move(hist)));
        }

        int n_leaves = 1;
        while (n_leaves < hp.max_leaf_nodes) {
            std::size_t pick = active.size();
            for (std::size_t i = 0; i < active.size(); ++i) {
                if (!active[i]->best.valid()) continue;
                if (pick == active.size() ||
                    active[i]->best.gain > active[pick]->best.gain ||
                    (active[i]->best.gain == active[pick]->best.gain &&
                     active[i]->seq < active[pick]->seq))
                    pick = i;
            }
            if (pick == active.size()) break;

            std::unique_ptr<Candidate> parent = std::move(active[pick]);
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
            const SplitChoice& sp = parent->best;

            // Route rows, preserving order.
            const std::size_t f = static_cast<std::size_t>(sp.feature);
            const FeatureBins& fb = model.bins.features[f];
            const std::uint8_t* codes = binned.data() + f * n;
            std::array<bool, 256> goes_left{};
            if (fb.kind == ColumnKind::numeric) {
                for (std::int32_t b = 0; b <= sp.threshold_bin; ++b)
                    goes_left[static_cast<std::size_t>(b)] = true;
            } else {
                for (std::int32_t b : sp.left_bins) goes_left[static_cast<std::size_t>(b)] = true;
            }
            goes_left[static_cast<std::size_t>(fb.missing_bin())] = sp.missing_left;

            std::vector<std::uint32_t> left_rows, right_rows;
            left_rows.reserve(parent->rows.size());
            right_rows.reserve(parent->rows.size());
            for (std::uint32_t r : parent->rows)
                (goes_left[codes[r]] ? left_rows : right_rows).push_back(r);

            const std::int32_t left_id = static_cast<std::int32_t>(tree.nodes.size());
            const std::int32_t right_id = left_id + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            {
                TreeNode& node = tree.nodes[static_cast<std::size_t>(parent->node_id)];
                node.feature = sp.feature;
                node.threshold_bin = sp.threshold_bin;
                node.left_bins.assign(sp.left_bins.begin(), sp.left_bins.end());
                node.missing_left = sp.missing_left;
                node.left = left_id;
                node.right = right_id;
            }

            // Smaller child built directly; sibling by histogram subtraction.
            const bool left_smaller = left_rows.size() <= right_rows.size();
            const auto& small_rows = left_smaller ? left_rows : right_rows;
            Histogram small_hist = make_histogram(model.bins);
            build_histogram(small_hist, small_rows, binned, n, g, h, threads);
            Histogram big_hist = std::move(parent->hist);
            subtract_histogram(big_hist, small_hist, threads);

            if (left_smaller) {
                active.push_back(
                    make_candidate(left_id, std::move(left_rows), std::move(small_hist)));
                active.push_back(
                    make_candidate(right_id, std::move(right_rows), std::move(big_hist)));
            } else {
                active.push_back(
                    make_candidate(left_id, std::move(left_rows), std::move(big_hist)));
                active.push_back(
                    make_candidate(right_id, std::move(right_rows), std::move(small_hist)));
            }
            ++n_leaves;
        }

        for (const auto& cand : active) {
            const double v = leaf_value(cand->sum_g, cand->sum_h, lambda);
            tree.nodes[static_cast<std::size_t>(cand->node_id)].value = v;
            for (std::uint32_t r : cand->rows) score[r] += hp.learning_rate * v;
        }
        model.trees.push_back(std::move(tree));

        for (std::size_t i = 0; i < n; ++i) prob[i] = stats::sigmoid(score[i]);
        model.train_logloss.push_back(stats::log_loss(prob, labels));
    }
    return model;
}

namespace {

// Resolves matrix columns against the model's feature list once per batch.
struct RoutingCache {
    struct Entry {
        const Column* col = nullptr;
        std::vector<std::int32_t> cat_to_bin;
    };
    std::vector<Entry> entries;

    RoutingCache(const Ensemble& model, const DataMatrix& data) {
        entries.resize(model.bins.features.size());
        for (std::size_t f = 0; f < model.bins.features.size(); ++f) {
            const FeatureBins& fb = model.bins.features[f];
            const Column* col = data.find(fb.name);
            require(col != nullptr, "predict: data is missing feature '" + fb.name + "'");
            require(col->kind == fb.kind, "predict: feature '" + fb.name + "' kind mismatch");
            entries[f].col = col;
            if (fb.kind == ColumnKind::categorical) {
                entries[f].cat_to_bin.resize(col->labels.size());
                for (std::size_t c = 0; c < col->labels.size(); ++c)
                    entries[f].cat_to_bin[c] = fb.bin_of_category(col->labels[c]);
            }
        }
    }

    std::int32_t bin_for(const Ensemble& model, std::size_t feature, std::size_t row) const {
        const FeatureBins& fb = model.bins.features[feature];
        const Entry& e = entries[feature];
        if (!e.col->present[row]) return fb.missing_bin();
        if (fb.kind == ColumnKind::numeric) return fb.bin_of_numeric(e.col->num[row]);
        return e.cat_to_bin[static_cast<std::size_t>(e.col->cat[row])];
    }
};

double route_score(const Ensemble& model, const RoutingCache& cache, std::size_t row) {
    double total = 0.0;
    for (const auto& tree : model.trees) {
        const TreeNode* node = &tree.nodes[0];
        while (!node->is_leaf()) {
            const std::size_t f = static_cast<std::size_t>(node->feature);
            const FeatureBins& fb = model.bins.features[f];
            const std::int32_t bin = cache.bin_for(model, f, row);
            bool left;
            if (bin == fb.missing_bin()) {
                left = node->missing_left;
            } else if (fb.kind == ColumnKind::numeric) {
                left = bin <= node->threshold_bin;
            } else {
                left = std::binary_search(node->left_bins.begin(), node->left_bins.end(), bin);
            }
            node = &tree.nodes[static_cast<std::size_t>(left ? node->left : node->right)];
        }
        total += node->value;
    }
    return model.base_score + model.learning_rate * total;
}

} // namespace

double predict_score(const Ensemble& model, const DataMatrix& data, std::size_t row) {
    require(row < data.n_rows, "predict: row out of range");
    RoutingCache cache(model, data);
    return route_score(model, cache, row);
}

double predict_proba(const Ensemble& model, const DataMatrix& data, std::size_t row) {
    return stats::sigmoid(predict_score(model, data, row));
}

std::vector<double> predict_proba_all(const Ensemble& model, const DataMatrix& data, int threads) {
    RoutingCache cache(model, data);
    std::vector<double> out(data.n_rows);
    parallel_for(data.n_rows, threads, [&](std::size_t i) {
        out[i] = stats::sigmoid(route_score(model, cache, i));
    });
    return out;
}

// --- serialization ----------------------------------------------------------

namespace {
constexpr const char* kModelSchema = "herdgate.model";
constexpr int kModelVersion = 1;
} // namespace

std::string model_to_json(const Ensemble& model) {
    ordered_json j;
    j["schema"] = kModelSchema;
    j["schema_version"] = kModelVersion;
    j["base_score"] = model.base_score;
    j["learning_rate"] = model.learning_rate;
    j["seed"] = model.seed;
    j["hyperparameters"] = {{"learning_rate", model.hp.learning_rate},
                            {"max_leaf_nodes", model.hp.max_leaf_nodes},
                            {"n_iterations", model.hp.n_iterations},
                            {"l2_regularization", model.hp.l2_regularization},
                            {"min_samples_leaf", model.hp.min_samples_leaf},
                            {"max_bins", model.hp.max_bins}};
    j["train_logloss"] = model.train_logloss;
    j["features"] = ordered_json::array();
    for (const auto& f : model.bins.features) {
        ordered_json fj;
        fj["name"] = f.name;
        fj["kind"] = f.kind == ColumnKind::numeric ? "numeric" : "categorical";
        fj["n_value_bins"] = f.n_value_bins;
        if (f.kind == ColumnKind::numeric) {
            fj["edges"] = f.edges;
        } else {
            fj["categories"] = f.categories;
            fj["category_bin"] = f.category_bin;
            fj["overflow_bin"] = f.overflow_bin;
        }
        j["features"].push_back(std::move(fj));
    }
    j["warnings"] = model.bins.warnings;
    j["trees"] = ordered_json::array();
    for (const auto& tree : model.trees) {
        ordered_json tj;
        std::vector<std::int32_t> feature, threshold_bin, left, right;
        std::vector<int> missing_left;
        std::vector<double> value;
        std::vector<std::vector<std::int32_t>> cat_left;
        for (const auto& node : tree.nodes) {
            feature.push_back(node.feature);
            threshold_bin.push_back(node.threshold_bin);
            left.push_back(node.left);
            right.push_back(node.right);
            missing_left.push_back(node.missing_left ? 1 : 0);
            value.push_back(node.value);
            cat_left.push_back(node.left_bins);
        }
        tj["feature"] = feature;
        tj["threshold_bin"] = threshold_bin;
        tj["left"] = left;
        tj["right"] = right;
        tj["missing_left"] = missing_left;
        tj["value"] = value;
        tj["category_left_bins"] = cat_left;
        j["trees"].push_back(std::move(tj));
    }
    return j.dump(2) + "\n";
}

Ensemble model_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("model file: invalid JSON: ") + e.what());
    }
    try {
        require(j.value("schema", "") == kModelSchema, "model file: not a model file");
        require(j.value("schema_version", -1) == kModelVersion,
                "model file: unsupported schema version " +
                    std::to_string(j.value("schema_version", -1)));
        Ensemble m;
        m.base_score = j.at("base_score").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& hj = j.at("hyperparameters");
        m.hp.learning_rate = hj.at("learning_rate").get<double>();
        m.hp.max_leaf_nodes = hj.at("max_leaf_nodes").get<int>();
        m.hp.n_iterations = hj.at("n_iterations").get<int>();
        m.hp.l2_regularization = hj.at("l2_regularization").get<double>();
        m.hp.min_samples_leaf = hj.at("min_samples_leaf").get<int>();
        m.hp.max_bins = hj.at("max_bins").get<int>();
        m.train_logloss = j.at("train_logloss").get<std::vector<double>>();
        for (const auto& fj : j.at("features")) {
            FeatureBins f;
            f.name = fj.at("name").get<std::string>();
            f.kind = fj.at("kind").get<std::string>() == "numeric" ? ColumnKind::numeric
                                                                   : ColumnKind::categorical;
            f.n_value_bins = fj.at("n_value_bins").get<std::int32_t>();
            if (f.kind == ColumnKind::numeric) {
                f.edges = fj.at("edges").get<std::vector<double>>();
            } else {
                f.categories = fj.at("categories").get<std::vector<std::string>>();
                f.category_bin = fj.at("category_bin").get<std::vector<std::int32_t>>();
                f.overflow_bin = fj.at("overflow_bin").get<std::int32_t>();
            }
            m.bins.features.push_back(std::move(f));
        }
        m.bins.warnings = j.value("warnings", std::vector<std::string>{});
        for (const auto& tj : j.at("trees")) {
            Tree t;
            const auto feature = tj.at("feature").get<std::vector<std::int32_t>>();
            const auto threshold_bin = tj.at("threshold_bin").get<std::vector<std::int32_t>>();
            const auto left = tj.at("left").get<std::vector<std::int32_t>>();
            const auto right = tj.at("right").get<std::vector<std::int32_t>>();
            const auto missing_left = tj.at("missing_left").get<std::vector<int>>();
            const auto value = tj.at("value").get<std::vector<double>>();
            const auto cat_left =
                tj.at("category_left_bins").get<std::vector<std::vector<std::int32_t>>>();
            const std::size_t n_nodes = feature.size();
            require(threshold_bin.size() == n_nodes && left.size() == n_nodes &&
                        right.size() == n_nodes && missing_left.size() == n_nodes &&
                        value.size() == n_nodes && cat_left.size() == n_nodes,
                    "model file: inconsistent tree arrays");
            for (std::size_t i = 0; i < n_nodes; ++i) {
                TreeNode node;
                node.feature = feature[i];
                node.threshold_bin = threshold_bin[i];
                node.left = left[i];
                node.right = right[i];
                node.missing_left = missing_left[i] != 0;
                node.value = value[i];
                node.left_bins = cat_left[i];
                const bool child_ok = node.left < 0 ||
                                      (node.left < static_cast<std::int32_t>(n_nodes) &&
                                       node.right > 0 &&
                                       node.right < static_cast<std::int32_t>(n_nodes));
                require(child_ok, "model file: child index out of range");
                t.nodes.push_back(std::move(node));
            }
            require(!t.nodes.empty(), "model file: empty tree");
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("model file: ") + e.what());
    }
}

void save_model(const Ensemble& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '" + path + "'");
    out << model_to_json(model);
    out.close();
    require(out.good(), "write failed for '" + path + "'");
}

Ensemble load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

} // namespace herdgate::hgbt
