#include "iamp/accel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "iamp/error.hpp"
#include "iamp/kernels.hpp"

namespace iamp {

namespace {

std::array<double, kFeaturesPerStep> step_channels(
    const StepObservation& ob, const Corridor& c,
    const std::vector<std::pair<int, double>>& entries) {
    std::array<double, kFeaturesPerStep> f{};
    f[0] = ob.a;
    if (ob.lead && ob.lead->leader_vehicle_id) {
        f[1] = std::min(ob.lead->d_lead, 100.0);
        f[2] = ob.lead->v_lead;
    } else {
        f[1] = 100.0;
        f[2] = ob.v;
    }
    double d_int = 100.0;
    for (const auto& [ix, arc] : entries) {
        if (arc >= ob.s) d_int = std::min(d_int, arc - ob.s);
    }
    f[3] = d_int;

    Corridor ahead = c;  // curvature integrals run from the observed position
    ahead.start_s = std::clamp(ob.s, 0.0, c.length);
    auto k = curvature_features(ahead);
    for (int i = 0; i < 12; ++i) f[4 + static_cast<std::size_t>(i)] = k[static_cast<std::size_t>(i)];

    for (std::size_t j = 0; j < 2; ++j) {
        std::size_t base = 16 + 3 * j;
        if (j < ob.influencers.size()) {
            const Influencer& inf = ob.influencers[j];
            f[base] = std::min(inf.d_int, 100.0);
            f[base + 1] = inf.v;
            // positive when we hold priority over that vehicle
            f[base + 2] = -inf.p_rel;
        } else {
            f[base] = 100.0;
            f[base + 1] = 0.0;
            f[base + 2] = 0.0;
        }
    }
    return f;
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double vec_sum(const std::vector<double>& v) { return kernels::sum(v.data(), v.size()); }

}  // namespace

FeatureVector extract_features(const std::vector<StepObservation>& history, const Corridor& c,
                               const std::vector<std::pair<int, double>>& entries) {
    if (history.size() < 2) throw DataError("feature extraction needs at least two observations");
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].t <= history[i - 1].t) {
            throw DataError("history observations must have strictly increasing timestamps");
        }
        if (history[i].t - history[i - 1].t > 0.4 + 1e-6) {
            throw DataError("history gap exceeds 0.4 s");
        }
    }
    double t_end = history.back().t;
    double span = t_end - history.front().t;
    if (span < 0.4 * (kHistorySteps - 1) - 1e-6) {
        throw DataError("history shorter than the 4 s feature window");
    }

    std::vector<std::array<double, kFeaturesPerStep>> channels;
    channels.reserve(history.size());
    for (const auto& ob : history) channels.push_back(step_channels(ob, c, entries));

    FeatureVector out(kFeatureDim, 0.0);
    std::size_t seg = 0;
    for (int k = 0; k < kHistorySteps; ++k) {
        double t = t_end - 0.4 * (kHistorySteps - 1 - k);
        while (seg + 2 < history.size() && history[seg + 1].t < t) ++seg;
        double t0 = history[seg].t, t1 = history[seg + 1].t;
        double w = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
        for (int i = 0; i < kFeaturesPerStep; ++i) {
            out[static_cast<std::size_t>(k * kFeaturesPerStep + i)] =
                (1.0 - w) * channels[seg][static_cast<std::size_t>(i)] +
                w * channels[seg + 1][static_cast<std::size_t>(i)];
        }
    }
    return out;
}

ARModel train(const std::vector<FeatureVector>& features,
              const std::vector<AccelProfile>& targets, const TrainConfig& cfg) {
    if (features.empty() || features.size() != targets.size()) {
        throw DataError("training needs matching, non-empty feature/target sets");
    }
    std::size_t n = features.size();
    std::size_t in_dim = features[0].size();
    std::size_t out_dim = targets[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != in_dim || targets[i].size() != out_dim) {
            throw DataError("ragged training sample at row " + std::to_string(i));
        }
    }

    ARModel model;
    model.in_dim = static_cast<int>(in_dim);
    model.out_dim = static_cast<int>(out_dim);
    model.seed = cfg.seed;
    model.epochs = cfg.epochs;
    model.feat_min.assign(in_dim, std::numeric_limits<double>::infinity());
    model.feat_max.assign(in_dim, -std::numeric_limits<double>::infinity());
    for (const auto& x : features) {
        for (std::size_t j = 0; j < in_dim; ++j) {
            model.feat_min[j] = std::min(model.feat_min[j], x[j]);
            model.feat_max[j] = std::max(model.feat_max[j], x[j]);
        }
    }
    for (std::size_t j = 0; j < in_dim; ++j) {
        if (!(model.feat_max[j] > model.feat_min[j])) model.feat_max[j] = model.feat_min[j] + 1.0;
    }

    // normalized design matrix, row per sample
    std::vector<double> xn(n * in_dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < in_dim; ++j) {
            xn[i * in_dim + j] =
                (features[i][j] - model.feat_min[j]) / (model.feat_max[j] - model.feat_min[j]);
        }
    }

    model.W.assign(out_dim * in_dim, 0.0);
    model.b.assign(out_dim, 0.0);
    std::vector<double> mw(model.W.size(), 0.0), vw(model.W.size(), 0.0);
    std::vector<double> mb(out_dim, 0.0), vb(out_dim, 0.0);
    std::vector<double> gw(model.W.size()), gb(out_dim);
    std::vector<double> yhat(out_dim), g(out_dim);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(cfg.seed);
    std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size));
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double phase = static_cast<double>(epoch % cfg.restart_period) /
                       static_cast<double>(cfg.restart_period);
        double lr = cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * phase));

        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += batch) {
            std::size_t end = std::min(begin + batch, n);
            double bs = static_cast<double>(end - begin);
            std::fill(gw.begin(), gw.end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t bi = begin; bi < end; ++bi) {
                const double* x = &xn[order[bi] * in_dim];
                const double* y = targets[order[bi]].data();
                kernels::gemv(out_dim, in_dim, model.W.data(), x, yhat.data());
                double sample_loss = 0.0;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    double e = yhat[o] + model.b[o] - y[o];
                    sample_loss += e * e + std::abs(e);
                    g[o] = (2.0 * e + sgn(e)) / static_cast<double>(out_dim);
                }
                batch_loss += sample_loss / static_cast<double>(out_dim);
                for (std::size_t o = 0; o < out_dim; ++o) {
                    kernels::axpy(g[o] / bs, x, &gw[o * in_dim], in_dim);
                    gb[o] += g[o] / bs;
                }
            }
            epoch_loss += batch_loss;
            if (!std::isfinite(batch_loss)) {
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            }

            ++step;
            double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto adam = [&](std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                            const std::vector<double>& grad) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                    w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
                }
            };
            adam(model.W, mw, vw, gw);
            adam(model.b, mb, vb, gb);
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return model;
}

AccelProfile infer(const ARModel& model, const FeatureVector& x, bool clamp) {
    if (static_cast<int>(x.size()) != model.in_dim) {
        throw DimensionError("feature vector has " + std::to_string(x.size()) +
                             " entries, model expects " + std::to_string(model.in_dim));
    }
    std::vector<double> xn(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        xn[j] = (x[j] - model.feat_min[j]) / (model.feat_max[j] - model.feat_min[j]);
    }
    AccelProfile y(static_cast<std::size_t>(model.out_dim));
    kernels::gemv(y.size(), xn.size(), model.W.data(), xn.data(), y.data());
    for (std::size_t o = 0; o < y.size(); ++o) {
        y[o] += model.b[o];
        if (clamp) y[o] = std::clamp(y[o], -3.0, 2.0);
    }
    return y;
}

void save_model(const ARModel& model, const std::string& path) {
    nlohmann::json header{{"version", 1},
                          {"in_dim", model.in_dim},
                          {"out_dim", model.out_dim},
                          {"feat_min", model.feat_min},
                          {"feat_max", model.feat_max},
                          {"seed", model.seed},
                          {"epochs", model.epochs},
                          {"loss_history", model.loss_history},
                          {"w_sum", vec_sum(model.W)},
                          {"b_sum", vec_sum(model.b)}};
    std::string htxt = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.write("IAMPAR01", 8);
    std::uint64_t hlen = htxt.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
    out.write(reinterpret_cast<const char*>(model.W.data()),
              static_cast<std::streamsize>(model.W.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.b.data()),
              static_cast<std::streamsize>(model.b.size() * sizeof(double)));
    if (!out) throw ParseError("write to '" + path + "' failed");
}

ARModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "IAMPAR01", 8) != 0) {
        throw ParseError("'" + path + "' is not a model file");
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1u << 20)) throw ParseError("corrupt model header");
    std::string htxt(hlen, '\0');
    in.read(htxt.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htxt);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corrupt model header: ") + e.what());
    }

    ARModel model;
    model.in_dim = header.at("in_dim").get<int>();
    model.out_dim = header.at("out_dim").get<int>();
    model.feat_min = header.at("feat_min").get<std::vector<double>>();
    model.feat_max = header.at("feat_max").get<std::vector<double>>();
    model.seed = header.at("seed").get<std::uint64_t>();
    model.epochs = header.at("epochs").get<int>();
    model.loss_history = header.at("loss_history").get<std::vector<double>>();
    if (model.in_dim <= 0 || model.out_dim <= 0 ||
        model.feat_min.size() != static_cast<std::size_t>(model.in_dim) ||
        model.feat_max.size() != model.feat_min.size()) {
        throw ParseError("model header is dimensionally inconsistent");
    }
    model.W.resize(static_cast<std::size_t>(model.in_dim) *
                   static_cast<std::size_t>(model.out_dim));
    model.b.resize(static_cast<std::size_t>(model.out_dim));
    in.read(reinterpret_cast<char*>(model.W.data()),
            static_cast<std::streamsize>(model.W.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(model.b.data()),
            static_cast<std::streamsize>(model.b.size() * sizeof(double)));
    if (!in) throw ParseError("corrupt model payload");
    // negated <= so NaNs in a damaged payload also fail
    if (!(std::abs(vec_sum(model.W) - header.at("w_sum").get<double>()) <= 1e-9) ||
        !(std::abs(vec_sum(model.b) - header.at("b_sum").get<double>()) <= 1e-9)) {
        throw ParseError("model file failed its checksum");
    }
    return model;
}

std::vector<AccelStep> profile_to_distributions(const AccelProfile& profile,
                                                const Discretization& disc,
                                                double sigma_floor) {
    if (profile.size() != kProfileLen) {
        throw DimensionError("acceleration profile must hold " + std::to_string(kProfileLen) +
                             " samples");
    }
    int group = kProfileLen / 10;
    std::vector<double> a_edge(static_cast<std::size_t>(disc.n_u) + 1);
    for (int i = 0; i <= disc.n_u; ++i) {
        a_edge[static_cast<std::size_t>(i)] = disc.accel(-1.0 + i * disc.du());
    }

    std::vector<AccelStep> out(10);
    for (int k = 0; k < 10; ++k) {
        double mu = 0.0;
        for (int j = 0; j < group; ++j) mu += profile[static_cast<std::size_t>(k * group + j)];
        mu /= group;
        double var = 0.0;
        for (int j = 0; j < group; ++j) {
            double d = profile[static_cast<std::size_t>(k * group + j)] - mu;
            var += d * d;
        }
        var /= group;
        AccelStep& st = out[static_cast<std::size_t>(k)];
        st.mu = mu;
        st.sigma = std::max(std::sqrt(var), sigma_floor);
        st.cell_mass.assign(static_cast<std::size_t>(disc.n_u), 0.0);

        std::vector<double> cdf(a_edge.size());
        for (std::size_t i = 0; i < a_edge.size(); ++i) {
            cdf[i] = norm_cdf((a_edge[i] - mu) / st.sigma);
        }
        double denom = cdf.back() - cdf.front();
        if (denom > 0.0) {
            for (int i = 0; i < disc.n_u; ++i) {
                st.cell_mass[static_cast<std::size_t>(i)] =
                    (cdf[static_cast<std::size_t>(i) + 1] - cdf[static_cast<std::size_t>(i)]) /
                    denom;
            }
        } else {
            // the law sits entirely outside the input range: all mass to the
            // nearest admissible cell
            std::size_t cell = mu < a_edge.front() ? 0 : st.cell_mass.size() - 1;
            st.cell_mass[cell] = 1.0;
        }
    }
    return out;
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("dataset '" + path + "' is empty");

    Dataset ds;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<double> vals;
        vals.reserve(kFeatureDim + kProfileLen);
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError("dataset '" + path + "' row " + std::to_string(row) +
                                 ": bad number '" + cell + "'");
            }
        }
        if (vals.size() != kFeatureDim + kProfileLen) {
            throw ParseError("dataset '" + path + "' row " + std::to_string(row) + ": expected " +
                             std::to_string(kFeatureDim + kProfileLen) + " columns, found " +
                             std::to_string(vals.size()));
        }
        ds.features.emplace_back(vals.begin(), vals.begin() + kFeatureDim);
        ds.targets.emplace_back(vals.begin() + kFeatureDim, vals.end());
    }
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (int i = 0; i < kFeatureDim; ++i) out << "f" << i << ",";
    for (int i = 0; i < kProfileLen; ++i) out << "t" << i << (i + 1 < kProfileLen ? "," : "\n");
    char buf[32];
    for (std::size_t r = 0; r < ds.features.size(); ++r) {
        std::string line;
        for (double v : ds.features[r]) {
            std::snprintf(buf, sizeof(buf), "%.17g,", v);
            line += buf;
        }
        const auto& y = ds.targets[r];
        for (std::size_t i = 0; i < y.size(); ++i) {
            std::snprintf(buf, sizeof(buf), i + 1 < y.size() ? "%.17g," : "%.17g\n", y[i]);
            line += buf;
        }
        out << line;
    }
    if (!out) throw ParseError("write to '" + path + "' failed");
}

}  // namespace iamp
