#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "iamp/accel.hpp"
#include "iamp/error.hpp"
#include "iamp/fusion.hpp"
#include "iamp/kernels.hpp"
#include "iamp/map.hpp"
#include "iamp/markov.hpp"
#include "iamp/pipeline.hpp"
#include "iamp/relations.hpp"
#include "iamp/scenario.hpp"
#include "iamp/tracks.hpp"

namespace {

iamp::Discretization disc_with_overrides(const std::string& text) {
    iamp::Discretization d;
    if (text.empty()) return d;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw iamp::ParseError(std::string("bad --disc: ") + e.what());
    }
    if (!j.is_object()) throw iamp::ParseError("--disc must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (k == "n_s")
            d.n_s = v.get<int>();
        else if (k == "ds")
            d.ds = v.get<double>();
        else if (k == "n_v")
            d.n_v = v.get<int>();
        else if (k == "dv")
            d.dv = v.get<double>();
        else if (k == "n_u")
            d.n_u = v.get<int>();
        else if (k == "a_pos")
            d.a_pos = v.get<double>();
        else if (k == "a_neg")
            d.a_neg = v.get<double>();
        else if (k == "tau")
            d.tau = v.get<double>();
        else if (k == "samples_per_cell")
            d.samples_per_cell = v.get<int>();
        else
            throw iamp::ParseError("unknown discretization key '" + k + "'");
    }
    return d;
}

// corridor and dependency snapshot at the busiest 0.4 s instant
void dump_scene(const iamp::LaneletMap& map, const iamp::TrackDataset& data,
                const std::string& corridors_path, const std::string& relations_path) {
    const auto& rec = data.recordings.front();
    double t_lo = 1e300, t_hi = -1e300;
    for (const auto& tr : rec.tracks) {
        t_lo = std::min(t_lo, tr.t_begin());
        t_hi = std::max(t_hi, tr.t_end());
    }
    std::size_t best_n = 0;
    std::vector<double> busiest;
    for (long k = static_cast<long>(std::ceil(t_lo / 0.4 - 1e-9)); k * 0.4 <= t_hi + 1e-9; ++k) {
        std::size_t n = 0;
        for (const auto& tr : rec.tracks)
            if (tr.at(k * 0.4)) ++n;
        if (n > best_n) {
            best_n = n;
            busiest.clear();
        }
        if (n == best_n) busiest.push_back(k * 0.4);
    }
    double best_t = busiest.empty() ? t_lo : busiest[busiest.size() / 2];

    std::vector<iamp::VehicleState> states;
    for (const auto& tr : rec.tracks) {
        if (auto p = tr.at(best_t))
            states.push_back({tr.id, p->pos, p->heading, p->v, p->a, tr.length, tr.width});
    }
    std::vector<iamp::Corridor> corridors;
    for (const auto& st : states) {
        try {
            auto cs = iamp::enumerate_corridors(map, st.id, st.pos, st.heading, st.v);
            corridors.insert(corridors.end(), cs.begin(), cs.end());
        } catch (const iamp::GeometryError&) {
        }
    }

    if (!corridors_path.empty()) {
        std::ofstream out(corridors_path);
        if (!out) throw iamp::ParseError("cannot write " + corridors_path);
        out << "timestamp,vehicle_id,corridor_id,length,start_s,lane_change,lanelets\n";
        char buf[160];
        for (const auto& c : corridors) {
            std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g,%.17g,%d,", best_t, c.vehicle_id,
                          c.id, c.length, c.start_s, c.lane_change ? 1 : 0);
            out << buf;
            for (std::size_t i = 0; i < c.lanelet_seq.size(); ++i)
                out << (i ? ";" : "") << c.lanelet_seq[i];
            out << "\n";
        }
    }
    if (!relations_path.empty()) {
        std::ofstream out(relations_path);
        if (!out) throw iamp::ParseError("cannot write " + relations_path);
        out << "timestamp,dependent_vehicle,dependent_corridor,blocking_vehicle,"
               "blocking_corridor,conflict_s_dependent,conflict_s_blocking\n";
        char buf[200];
        for (const auto& d : iamp::corridor_dependencies(map, corridors, states)) {
            std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%d,%d,%.17g,%.17g\n", best_t,
                          d.dependent_vehicle_id, d.dependent_corridor_id, d.blocking_vehicle_id,
                          d.blocking_corridor_id, d.conflict_s_dependent, d.conflict_s_blocking);
            out << buf;
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interaction-aware motion prediction toolkit"};
    app.require_subcommand(1);

    auto* ver = app.add_subcommand("version", "print build info");

    std::string pc_out = "matrices.bin";
    std::string pc_disc;
    auto* pre = app.add_subcommand("precompute", "build and store the chain transition matrices");
    pre->add_option("-o,--out", pc_out, "output file")->capture_default_str();
    pre->add_option("--disc", pc_disc, "discretization overrides, e.g. '{\"n_s\":40}'");

    std::string sg_name = "t_junction";
    std::uint64_t sg_seed = 0;
    std::string sg_out = "scenario";
    auto* sgen = app.add_subcommand("scenario-gen", "write a synthetic scenario to a directory");
    sgen->add_option("--name", sg_name, "one of the built-in scenario names")
        ->capture_default_str();
    sgen->add_option("--seed", sg_seed, "start-condition jitter seed")->capture_default_str();
    sgen->add_option("-o,--out", sg_out, "output directory")->capture_default_str();

    std::vector<std::string> dg_names;
    std::vector<std::uint64_t> dg_seeds{0};
    std::string dg_out = "dataset.csv";
    auto* dgen = app.add_subcommand("dataset-gen",
                                    "extract feature/target pairs from generated scenarios");
    dgen->add_option("--names", dg_names, "scenario names (default: all)");
    dgen->add_option("--seeds", dg_seeds, "one scenario instance per seed")
        ->capture_default_str();
    dgen->add_option("-o,--out", dg_out, "output csv")->capture_default_str();

    std::string tr_data, tr_out = "model.bin";
    iamp::TrainConfig tr_cfg;
    auto* trn = app.add_subcommand("train", "fit the acceleration model on a dataset csv");
    trn->add_option("--data", tr_data, "dataset csv")->required();
    trn->add_option("--epochs", tr_cfg.epochs, "training epochs")->capture_default_str();
    trn->add_option("--seed", tr_cfg.seed, "shuffle/init seed")->capture_default_str();
    trn->add_option("--batch", tr_cfg.batch_size, "mini-batch size")->capture_default_str();
    trn->add_option("-o,--out", tr_out, "model file")->capture_default_str();

    std::string in_model, in_data;
    int in_row = -1;
    auto* inf = app.add_subcommand("infer", "run the model on dataset rows");
    inf->add_option("--model", in_model, "model file")->required();
    inf->add_option("--data", in_data, "dataset csv")->required();
    inf->add_option("--row", in_row, "print the profile of one row instead of the dataset MSE");

    std::string p_map, p_tracks, p_matrices, p_model, p_mode = "baseline", p_out = "report";
    std::string p_svg, p_grids, p_corridors, p_relations;
    int p_repeats = 3;
    std::uint64_t p_seed = 0;
    bool p_trace = false, p_joint = false;
    auto* prd = app.add_subcommand("predict", "run the prediction loop over a recording");
    prd->add_option("--map", p_map, "lanelet map json")->required();
    prd->add_option("--tracks", p_tracks, "tracks csv (frame-rate sidecar next to it)")
        ->required();
    prd->add_option("--matrices", p_matrices, "precomputed transition matrices")->required();
    prd->add_option("--mode", p_mode, "baseline or hybrid")->capture_default_str();
    prd->add_option("--model", p_model, "acceleration model (hybrid)");
    prd->add_option("--repeats", p_repeats, "timing repeats")->capture_default_str();
    prd->add_option("--seed", p_seed, "filter seed")->capture_default_str();
    prd->add_option("-o,--out", p_out, "report directory")->capture_default_str();
    prd->add_flag("--trace", p_trace, "also write per-corridor posterior rows");
    prd->add_flag("--joint-min", p_joint, "report the displacement pair of the ADE winner");
    prd->add_option("--svg", p_svg, "render the final instant's grids to this file");
    prd->add_option("--dump-grids", p_grids, "write the final instant's grid cells as csv");
    prd->add_option("--dump-corridors", p_corridors, "corridor snapshot csv");
    prd->add_option("--dump-relations", p_relations, "corridor dependency snapshot csv");

    std::string e_report;
    auto* evl = app.add_subcommand("evaluate", "summarize a report directory");
    evl->add_option("--report", e_report, "directory written by predict")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ver->parsed()) {
            std::printf("iamp (kernels: %s)\n", iamp::kernels::active_isa());
        } else if (pre->parsed()) {
            auto disc = disc_with_overrides(pc_disc);
            auto m = iamp::compute_transition_matrices(disc);
            iamp::save_matrices(m, pc_out);
            std::printf("wrote %s: %d cells, %zu step entries, %zu interval entries\n",
                        pc_out.c_str(), disc.n_cells(), m.step.vals.size(),
                        m.interval.vals.size());
        } else if (sgen->parsed()) {
            auto sc = iamp::generate_scenario(sg_name, sg_seed);
            iamp::write_scenario(sc, sg_out);
            std::printf("wrote %s: %zu rows, %zu lanelets\n", sg_out.c_str(), sc.rows.size(),
                        sc.map_json.at("lanelets").size());
        } else if (dgen->parsed()) {
            if (dg_names.empty()) dg_names = iamp::scenario_names();
            iamp::Dataset all;
            for (const auto& name : dg_names) {
                for (auto seed : dg_seeds) {
                    auto sc = iamp::generate_scenario(name, seed);
                    auto part = iamp::build_training_dataset(sc.map(), sc.dataset());
                    all.features.insert(all.features.end(), part.features.begin(),
                                        part.features.end());
                    all.targets.insert(all.targets.end(), part.targets.begin(),
                                       part.targets.end());
                }
            }
            if (all.features.empty()) throw iamp::DataError("no samples extracted");
            iamp::save_dataset_csv(all, dg_out);
            std::printf("wrote %s: %zu samples from %zu scenario(s) x %zu seed(s)\n",
                        dg_out.c_str(), all.features.size(), dg_names.size(), dg_seeds.size());
        } else if (trn->parsed()) {
            auto ds = iamp::load_dataset_csv(tr_data);
            auto model = iamp::train(ds.features, ds.targets, tr_cfg);
            iamp::save_model(model, tr_out);
            std::printf("wrote %s: %zu samples, %d epochs, loss %.6f -> %.6f\n", tr_out.c_str(),
                        ds.features.size(), model.epochs, model.loss_history.front(),
                        model.loss_history.back());
        } else if (inf->parsed()) {
            auto model = iamp::load_model(in_model);
            auto ds = iamp::load_dataset_csv(in_data);
            if (in_row >= 0) {
                if (static_cast<std::size_t>(in_row) >= ds.features.size())
                    throw iamp::DataError("--row out of range");
                auto y = iamp::infer(model, ds.features[static_cast<std::size_t>(in_row)]);
                for (std::size_t i = 0; i < y.size(); ++i)
                    std::printf("%s%.17g", i ? "," : "", y[i]);
                std::printf("\n");
            } else {
                double mse = 0.0;
                for (std::size_t i = 0; i < ds.features.size(); ++i) {
                    auto y = iamp::infer(model, ds.features[i]);
                    double e = 0.0;
                    for (std::size_t o = 0; o < y.size(); ++o) {
                        double d = y[o] - ds.targets[i][o];
                        e += d * d;
                    }
                    mse += e / y.size();
                }
                std::printf("mse %.17g over %zu samples\n", mse / ds.features.size(),
                            ds.features.size());
            }
        } else if (prd->parsed()) {
            iamp::PipelineConfig cfg;
            if (p_mode == "baseline")
                cfg.mode = iamp::PredictionMode::baseline;
            else if (p_mode == "hybrid")
                cfg.mode = iamp::PredictionMode::hybrid;
            else
                throw iamp::DataError("--mode must be baseline or hybrid");
            cfg.repeats = p_repeats;
            cfg.seed = p_seed;
            cfg.trace = p_trace;
            cfg.fusion.joint_min = p_joint;
            cfg.keep_grids = !p_svg.empty() || !p_grids.empty();

            auto map = iamp::load_map(p_map);
            auto data = iamp::ingest_tracks(p_tracks);
            auto matrices = iamp::load_matrices(p_matrices);
            std::optional<iamp::ARModel> model;
            if (!p_model.empty()) model = iamp::load_model(p_model);

            auto rep = iamp::run_prediction(map, data, matrices, model ? &*model : nullptr, cfg);
            iamp::write_report(rep, p_out);
            if (!p_grids.empty()) {
                std::ofstream out(p_grids);
                if (!out) throw iamp::ParseError("cannot write " + p_grids);
                iamp::dump_grids_csv(out, rep.last_grids);
            }
            if (!p_svg.empty()) iamp::write_svg(p_svg, map, rep.last_grids, rep.last_truth);
            if (!p_corridors.empty() || !p_relations.empty())
                dump_scene(map, data, p_corridors, p_relations);
            std::printf("%s: %zu rows, mADE %.4f, mFDE %.4f, %.4f s/instant\n", rep.mode.c_str(),
                        rep.rows.size(), rep.mean_made, rep.mean_mfde, rep.mean_predict_seconds);
        } else if (evl->parsed()) {
            auto rep = iamp::load_report(e_report);
            std::fputs(iamp::format_report_table(rep).c_str(), stdout);
        }
    } catch (const iamp::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
