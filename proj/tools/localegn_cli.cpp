// Command-line front end: synthetic data generation, training, evaluation,
// zero-shot transfer, and the GN-depth calculator. Options can come from a
// `key = value` config file with [subcommand] sections; command-line flags
// override file values. Exit codes: 0 success, 1 usage or configuration
// error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "localegn/checkpoint.hpp"
#include "localegn/csv.hpp"
#include "localegn/experiment.hpp"
#include "localegn/locale.hpp"
#include "localegn/metrics.hpp"
#include "localegn/synthetic.hpp"
#include "localegn/train.hpp"

namespace {

using namespace localegn;

struct GenOptions {
    DiffusionSpec spec;
    std::string out_edges;
    std::string out_signals;
};

struct TrainOptions {
    std::string edges;
    std::string signals;
    std::string out_checkpoint;
    std::string out_log;
    std::string variant = "locale-gn";
    std::string aggregate = "incoming";
    TrainConfig train;
    double interval_minutes = 5.0;
};

struct EvalOptions {
    std::string edges;
    std::string signals;
    std::string checkpoint;
    std::string baseline;
    std::string out_report;
    std::string units = "units";
    std::vector<std::size_t> horizons = {1, 3, 6, 9, 12};
    std::size_t lookback = 12; // used by the checkpoint-free baseline path
    double interval_minutes = 5.0;
};

struct KLayersOptions {
    std::string edges;
    std::string out_csv;
    std::size_t steps = 1;
    double interval_minutes = 5.0;
    double freeflow = 0.0;
    double shockwave = 0.0;
};

ModelConfig model_config_from(const TrainOptions& o) {
    ModelConfig cfg;
    cfg.variant = parse_variant(o.variant);
    cfg.lookback = o.train.lookback;
    cfg.hidden = o.train.hidden;
    cfg.gn_layers = o.train.gn_layers;
    if (o.aggregate == "incoming")
        cfg.aggregate = AggregateOver::Incoming;
    else if (o.aggregate == "outgoing")
        cfg.aggregate = AggregateOver::Outgoing;
    else
        throw ConfigError("unknown aggregation direction: " + o.aggregate);
    return cfg;
}

int cmd_gen(const GenOptions& o) {
    const SyntheticData data = generate(o.spec);
    write_graph(o.out_edges, data.graph);
    write_signals(o.out_signals, data.signals);
    std::printf("wrote %s (%zu nodes, %zu edges) and %s (%zu steps)\n", o.out_edges.c_str(),
                data.graph.num_nodes, data.graph.num_edges(), o.out_signals.c_str(),
                data.signals.steps());
    return 0;
}

int cmd_train(const TrainOptions& o) {
    const DirectedGraph graph = load_graph(o.edges);
    const SignalSeries series = load_signals(o.signals, graph, o.interval_minutes);
    const ModelConfig cfg = model_config_from(o);
    const Dataset data = prepare_dataset(series, o.train.lookback, 1,
                                         o.train.subsample_fraction, o.train.seed,
                                         o.train.contiguous_subsample);
    const TrainResult result = train(cfg, data, graph, o.train);

    Checkpoint ck;
    ck.config = cfg;
    ck.seed = o.train.seed;
    ck.normalizer = data.normalizer;
    ck.params = result.params;
    save_checkpoint(o.out_checkpoint, ck);
    if (!o.out_log.empty()) csv::write_file(o.out_log, result.log.to_csv());

    const double best = result.log.checkpoint_val_rmse[result.log.best_checkpoint];
    std::printf("trained %s for %zu iterations (lr=%g, wd=%g, M=%zu, H=%zu)\n",
                o.variant.c_str(), o.train.iterations, o.train.lr, o.train.weight_decay,
                o.train.lookback, o.train.hidden);
    std::printf("best validation rmse %.6f at iteration %zu; checkpoint %s\n", best,
                result.log.checkpoint_iters[result.log.best_checkpoint],
                o.out_checkpoint.c_str());
    return 0;
}

int cmd_eval(const EvalOptions& o) {
    const DirectedGraph graph = load_graph(o.edges);
    const SignalSeries series = load_signals(o.signals, graph, o.interval_minutes);
    std::size_t max_h = 1;
    for (std::size_t h : o.horizons) max_h = std::max(max_h, h);

    EvalReport report;
    report.horizons = o.horizons;
    report.units = o.units;

    if (!o.baseline.empty()) {
        if (o.baseline != "persistence")
            throw ConfigError("unknown baseline: " + o.baseline);
        const SplitSegments seg = split_series(series, o.lookback, max_h);
        const auto test = make_windows(series, seg.test, o.lookback, max_h);
        report.runs.push_back(evaluate_persistence(graph, test, o.horizons));
    } else {
        if (o.checkpoint.empty())
            throw ConfigError("eval needs --checkpoint (or --baseline persistence)");
        const Checkpoint ck = load_checkpoint(o.checkpoint);
        const SplitSegments seg = split_series(series, ck.config.lookback, max_h);
        const auto test = make_windows(series, seg.test, ck.config.lookback, max_h);
        report.runs.push_back(
            evaluate(ck.config, graph, ck.params, test, ck.normalizer, o.horizons));
    }
    csv::write_file(o.out_report, report.to_csv());
    std::fputs(report.to_table().c_str(), stdout);
    std::printf("report written to %s\n", o.out_report.c_str());
    return 0;
}

int cmd_transfer(const EvalOptions& o) {
    if (o.checkpoint.empty()) throw ConfigError("transfer needs --checkpoint");
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    require_manifest(ck, ck.config); // manifest self-consistency after load

    const DirectedGraph graph = load_graph(o.edges);
    const SignalSeries series = load_signals(o.signals, graph, o.interval_minutes);
    std::size_t max_h = 1;
    for (std::size_t h : o.horizons) max_h = std::max(max_h, h);

    // the target dataset is normalized by its own training-slice statistics
    const SplitSegments seg = split_series(series, ck.config.lookback, max_h);
    const Normalizer norm = Normalizer::fit(series, seg.train);
    const auto test = make_windows(series, seg.test, ck.config.lookback, max_h);

    EvalReport report;
    report.horizons = o.horizons;
    report.units = o.units;
    report.runs.push_back(
        transfer_evaluate(ck.config, ck.params, graph, test, norm, o.horizons));
    csv::write_file(o.out_report, report.to_csv());
    std::fputs(report.to_table().c_str(), stdout);
    std::printf("report written to %s\n", o.out_report.c_str());
    return 0;
}

int cmd_klayers(const KLayersOptions& o) {
    const DirectedGraph graph = load_graph(o.edges);
    std::vector<double> f(graph.num_nodes, o.freeflow);
    std::vector<double> w(graph.num_nodes, o.shockwave);
    if (o.freeflow <= 0.0 || o.shockwave <= 0.0) {
        if (!graph.has_speeds())
            throw ConfigError("the edge file has no speed columns; pass --freeflow and "
                              "--shockwave (km/h)");
        // per-node speeds from the file: forward propagation leaves along
        // out-edges, spillback arrives along in-edges
        double max_f = 0.0, max_w = 0.0;
        for (std::size_t k = 0; k < graph.num_edges(); ++k) {
            max_f = std::max(max_f, graph.freeflow_kmh[k]);
            max_w = std::max(max_w, graph.shockwave_kmh[k]);
        }
        std::fill(f.begin(), f.end(), 0.0);
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t k = 0; k < graph.num_edges(); ++k) {
            const auto& e = graph.edges[k];
            f[e.tail] = std::max(f[e.tail], graph.freeflow_kmh[k]);
            w[e.head] = std::max(w[e.head], graph.shockwave_kmh[k]);
        }
        for (std::size_t i = 0; i < graph.num_nodes; ++i) {
            if (f[i] <= 0.0) f[i] = max_f;
            if (w[i] <= 0.0) w[i] = max_w;
        }
    }

    const HopTable table = hop_and_distance(graph);
    const LayerRecommendation rec =
        recommend_layers(graph, table, o.steps, o.interval_minutes, f, w);

    std::string out = "node,forward_hops,backward_hops,recommended_k\n";
    for (std::size_t i = 0; i < graph.num_nodes; ++i)
        out += std::to_string(i) + "," + std::to_string(rec.forward_hops[i]) + "," +
               std::to_string(rec.backward_hops[i]) + "," + std::to_string(rec.k) + "\n";
    if (!o.out_csv.empty()) csv::write_file(o.out_csv, out);
    std::printf("recommended_gn_layers %zu\n", rec.k);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"localegn: few-sample traffic prediction with localized graph networks"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default(true);
    app.set_config("--config", "", "read options from a [section] key=value file");
    app.allow_config_extras(false);

    GenOptions gen;
    auto* sgen = app.add_subcommand("gen", "generate a synthetic diffusion dataset");
    sgen->configurable();
    sgen->add_option("--nodes", gen.spec.num_nodes, "number of nodes");
    sgen->add_option("--edge-prob", gen.spec.edge_prob, "directed edge probability");
    sgen->add_option("--alpha", gen.spec.alpha, "diffusion coefficient, below 0.5");
    sgen->add_option("--noise", gen.spec.noise_std, "per-step noise std");
    sgen->add_option("--steps", gen.spec.steps, "number of 5-minute intervals");
    sgen->add_option("--seed", gen.spec.seed, "root seed (sub-seeds derive via splitmix)");
    sgen->add_option("--base", gen.spec.base, "base signal level");
    sgen->add_option("--amplitude", gen.spec.amplitude, "daily sinusoid amplitude");
    sgen->add_option("--interval", gen.spec.interval_minutes, "minutes per interval");
    sgen->add_option("--out-edges", gen.out_edges, "edge csv output path")->required();
    sgen->add_option("--out-signals", gen.out_signals, "signal csv output path")->required();

    TrainOptions tr;
    auto* strain = app.add_subcommand("train", "train a model on an edge/signal csv pair");
    strain->configurable();
    strain->add_option("--edges", tr.edges, "edge csv path")->required();
    strain->add_option("--signals", tr.signals, "signal csv path")->required();
    strain->add_option("--variant", tr.variant,
                       "locale-gn | gn-only | node-gru-only | residual-gn | attention-gn");
    strain->add_option("--lr", tr.train.lr, "learning rate");
    strain->add_option("--weight-decay", tr.train.weight_decay, "coupled L2 decay");
    strain->add_option("--iterations", tr.train.iterations, "gradient steps");
    strain->add_option("--lookback", tr.train.lookback, "window length M");
    strain->add_option("--hidden", tr.train.hidden, "hidden width H");
    strain->add_option("--gn-layers", tr.train.gn_layers, "stacked GN layers");
    strain->add_option("--seed", tr.train.seed, "root seed (sub-seeds derive via splitmix)");
    strain->add_option("--batch", tr.train.batch_size, "windows per gradient step");
    strain->add_option("--subsample", tr.train.subsample_fraction,
                       "fraction of training windows kept");
    strain->add_flag("--contiguous-subsample", tr.train.contiguous_subsample,
                     "subsample one contiguous block instead of random indices");
    strain->add_option("--val-every", tr.train.val_every, "validation cadence");
    strain->add_option("--aggregate", tr.aggregate, "incoming | outgoing edge aggregation");
    strain->add_option("--interval", tr.interval_minutes, "minutes per interval");
    strain->add_option("--out-checkpoint", tr.out_checkpoint, "checkpoint path")->required();
    strain->add_option("--out-log", tr.out_log, "training log csv path");

    EvalOptions ev;
    auto* seval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    seval->configurable();
    seval->add_option("--edges", ev.edges, "edge csv path")->required();
    seval->add_option("--signals", ev.signals, "signal csv path")->required();
    seval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint path");
    seval->add_option("--baseline", ev.baseline, "checkpoint-free comparator: persistence");
    seval->add_option("--horizons", ev.horizons, "prediction horizons in steps");
    seval->add_option("--lookback", ev.lookback, "window length for --baseline runs");
    seval->add_option("--units", ev.units, "unit tag for the report");
    seval->add_option("--interval", ev.interval_minutes, "minutes per interval");
    seval->add_option("--out-report", ev.out_report, "report csv path")->required();

    EvalOptions tf;
    auto* stransfer =
        app.add_subcommand("transfer", "zero-shot evaluation on a different graph");
    stransfer->configurable();
    stransfer->add_option("--checkpoint", tf.checkpoint, "source-trained checkpoint")
        ->required();
    stransfer->add_option("--edges", tf.edges, "target edge csv path")->required();
    stransfer->add_option("--signals", tf.signals, "target signal csv path")->required();
    stransfer->add_option("--horizons", tf.horizons, "prediction horizons in steps");
    stransfer->add_option("--units", tf.units, "unit tag for the report");
    stransfer->add_option("--interval", tf.interval_minutes, "minutes per interval");
    stransfer->add_option("--out-report", tf.out_report, "report csv path")->required();

    KLayersOptions kl;
    auto* sklayers =
        app.add_subcommand("klayers", "recommend the GN depth from propagation speeds");
    sklayers->configurable();
    sklayers->add_option("--edges", kl.edges, "edge csv path")->required();
    sklayers->add_option("--steps", kl.steps, "prediction horizon in intervals");
    sklayers->add_option("--interval", kl.interval_minutes, "minutes per interval");
    sklayers->add_option("--freeflow", kl.freeflow, "global free-flow speed km/h");
    sklayers->add_option("--shockwave", kl.shockwave, "global shockwave speed km/h");
    sklayers->add_option("--out", kl.out_csv, "per-node hop csv path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (sgen->parsed()) return cmd_gen(gen);
        if (strain->parsed()) return cmd_train(tr);
        if (seval->parsed()) return cmd_eval(ev);
        if (stransfer->parsed()) return cmd_transfer(tf);
        if (sklayers->parsed()) return cmd_klayers(kl);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
