#include "scan/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scan/dataset.hpp"
#include "scan/evaluation.hpp"
#include "scan/trainer.hpp"

namespace scan::cli {

namespace {

using nlohmann::json;

struct GenDataArgs {
    SyntheticSpec spec;
    std::string out;
};

struct PretrainArgs {
    std::string data;
    std::string mode = "scan";
    std::string neighbors;  // table path, required for scan mode
    std::string out;
    std::string log;
    TrainConfig config;
    std::vector<std::size_t> hidden = {128};
    std::string bank_init = "random";
    std::string denominator = "paper";
};

struct EmbedArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string tap = "final";
    std::size_t batch = 512;
};

struct MineArgs {
    std::string data;
    std::string embeddings;
    std::string out;
    std::uint32_t k = 2;
    unsigned workers = 0;  // 0 = hardware concurrency
    std::string appearance_source = "bootstrap-checkpoint";
};

struct EvalArgs {
    std::string data;
    std::string embeddings;
    std::string probe = "knn";
    std::size_t knn_k = 20;
    std::size_t retrieval_k = 3;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    std::string json_out;
    std::string csv_out;
};

struct RetrieveArgs {
    std::string data;
    std::string embeddings;
    std::size_t query = 0;
    std::size_t k = 3;
};

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

EmbeddingMatrix load_normalized_embeddings(const std::string& path) {
    // Disk precision is f32, so unit rows come back slightly off; renormalize
    // explicitly before any similarity work.
    return l2_normalize_rows(read_embeddings(path));
}

int run_gen_data(const GenDataArgs& args) {
    const VectorDataset dataset = generate_synthetic(args.spec);
    write_dataset(dataset, args.out);
    std::printf("wrote %s: n=%u d=%u classes=%u modes=%u\n", args.out.c_str(), dataset.n,
                dataset.d, args.spec.classes, args.spec.classes * args.spec.modes_per_class);
    return 0;
}

int run_pretrain(PretrainArgs& args) {
    const VectorDataset dataset = read_dataset(args.data);

    TrainConfig& config = args.config;
    config.hidden_sizes = args.hidden;
    if (args.mode == "moco") {
        config.mode = TrainMode::Moco;
    } else if (args.mode == "scan") {
        config.mode = TrainMode::Scan;
    } else {
        config.mode = TrainMode::Scl;
    }
    config.bank_init = args.bank_init == "random" ? BankInit::Random : BankInit::Empty;
    config.denominator =
        args.denominator == "paper" ? DenominatorMode::Paper : DenominatorMode::InfoNce;

    NeighborTable table;
    const NeighborTable* table_ptr = nullptr;
    if (!args.neighbors.empty()) {
        table = load_table(args.neighbors);
        table_ptr = &table;
    }

    const EmbeddingMatrix features = features_as_matrix(dataset);
    TrainResult result = pretrain(features, dataset.labels, table_ptr, config);
    save_checkpoint(result.pair, args.out);
    if (!args.log.empty()) write_train_log_csv(result.log, args.log);

    if (!result.log.empty()) {
        std::printf("trained %zu epochs, final mean loss %.6f, wrote %s\n", result.log.size(),
                    result.log.back().mean_loss, args.out.c_str());
    } else {
        std::printf("trained 0 epochs, wrote %s\n", args.out.c_str());
    }
    return 0;
}

int run_embed(const EmbedArgs& args) {
    const MomentumPair pair = load_checkpoint(args.checkpoint);
    const VectorDataset dataset = read_dataset(args.data);
    const EmbeddingMatrix features = features_as_matrix(dataset);
    const FeatureTap tap =
        args.tap == "penultimate" ? FeatureTap::Penultimate : FeatureTap::Final;

    EmbeddingMatrix all(dataset.n, 0);
    bool first = true;
    for (std::size_t begin = 0; begin < features.n; begin += args.batch) {
        const std::size_t end = std::min<std::size_t>(features.n, begin + args.batch);
        EmbeddingMatrix slice(end - begin, features.d);
        std::copy(features.values.begin() + begin * features.d,
                  features.values.begin() + end * features.d, slice.values.begin());
        const EmbeddingMatrix out = embed(pair.query, slice, tap);
        if (first) {
            all.d = out.d;
            all.values.assign(static_cast<std::size_t>(dataset.n) * out.d, 0.0);
            first = false;
        }
        std::copy(out.values.begin(), out.values.end(), all.values.begin() + begin * all.d);
    }
    all.normalized = true;
    write_embeddings(all, args.out);
    std::printf("embedded %u rows to dim %zu, wrote %s\n", dataset.n, all.d, args.out.c_str());
    return 0;
}

int run_mine(const MineArgs& args) {
    const VectorDataset dataset = read_dataset(args.data);
    const LabelVector labels = labels_of(dataset);

    EmbeddingMatrix appearance;
    if (args.appearance_source == "raw") {
        appearance = l2_normalize_rows(features_as_matrix(dataset));
    } else {
        appearance = load_normalized_embeddings(args.embeddings);
    }
    if (appearance.n != dataset.n) {
        throw LabelMismatch("mine: embeddings cover " + std::to_string(appearance.n) +
                            " rows, dataset has " + std::to_string(dataset.n));
    }

    const NeighborTable table =
        mine_fast(appearance, labels, args.k, resolve_workers(args.workers));
    save_table(table, args.out);

    std::size_t short_queries = 0;
    for (std::uint32_t s : table.shortfall) short_queries += s > 0 ? 1 : 0;
    std::printf("mined top-%u neighbors for %zu queries (%zu with shortfall), wrote %s\n",
                args.k, table.size(), short_queries, args.out.c_str());
    return 0;
}

int run_eval(const EvalArgs& args) {
    const VectorDataset dataset = read_dataset(args.data);
    const EmbeddingMatrix embeddings = load_normalized_embeddings(args.embeddings);
    if (embeddings.n != dataset.n) {
        throw LabelMismatch("eval: embeddings cover " + std::to_string(embeddings.n) +
                            " rows, dataset has " + std::to_string(dataset.n));
    }
    const LabelVector labels = labels_of(dataset);

    // Seeded split: a fixed permutation, last test_fraction of it held out.
    Rng rng(args.seed);
    const std::vector<std::size_t> perm = rng.permutation(dataset.n);
    const std::size_t test_count =
        std::min<std::size_t>(dataset.n, static_cast<std::size_t>(
                                             std::llround(args.test_fraction * dataset.n)));
    const std::size_t train_count = dataset.n - test_count;

    EmbeddingMatrix train(train_count, embeddings.d), test(test_count, embeddings.d);
    train.normalized = test.normalized = true;
    std::vector<std::int32_t> train_labels(train_count), test_labels(test_count);
    for (std::size_t i = 0; i < train_count; ++i) {
        std::copy_n(embeddings.row(perm[i]).data(), embeddings.d, train.row(i).data());
        train_labels[i] = labels.labels[perm[i]];
    }
    for (std::size_t i = 0; i < test_count; ++i) {
        std::copy_n(embeddings.row(perm[train_count + i]).data(), embeddings.d,
                    test.row(i).data());
        test_labels[i] = labels.labels[perm[train_count + i]];
    }

    json summary;
    summary["command"] = "eval";
    summary["seed"] = args.seed;
    summary["config"] = {{"dataset", args.data},       {"embeddings", args.embeddings},
                         {"probe", args.probe},        {"knn_k", args.knn_k},
                         {"retrieval_k", args.retrieval_k},
                         {"test_fraction", args.test_fraction}};

    if (args.probe == "knn" || args.probe == "both") {
        const double acc = knn_probe(train, train_labels, test, test_labels, args.knn_k);
        summary["results"]["knn_accuracy"] = acc;
        std::printf("knn probe (k=%zu): accuracy %.4f\n", args.knn_k, acc);
    }
    if (args.probe == "linear" || args.probe == "both") {
        const LinearProbeResult lin = linear_probe(train, train_labels, test, test_labels);
        summary["results"]["linear"] = {{"accuracy", lin.accuracy},
                                        {"converged", lin.converged},
                                        {"degenerate", lin.degenerate},
                                        {"iterations", lin.iterations}};
        std::printf("linear probe: accuracy %.4f (%s after %zu iterations)\n", lin.accuracy,
                    lin.converged ? "converged" : "not converged", lin.iterations);
    }

    std::vector<std::size_t> queries(dataset.n);
    for (std::size_t i = 0; i < queries.size(); ++i) queries[i] = i;
    const PurityReport report =
        retrieval_report(embeddings, labels, queries, args.retrieval_k);
    summary["results"]["retrieval"] = {{"k", report.k},
                                       {"mean_class_purity", report.mean_class_purity}};
    if (report.has_modes) {
        summary["results"]["retrieval"]["mean_mode_purity"] = report.mean_mode_purity;
        summary["results"]["retrieval"]["mean_joint_purity"] = report.mean_joint_purity;
    }
    std::printf("retrieval (k=%zu): class purity %.4f", report.k, report.mean_class_purity);
    if (report.has_modes) {
        std::printf(", mode purity %.4f, joint purity %.4f", report.mean_mode_purity,
                    report.mean_joint_purity);
    }
    std::printf("\n");

    if (!args.csv_out.empty()) write_report_csv(report, args.csv_out);
    if (!args.json_out.empty()) {
        std::ofstream out(args.json_out, std::ios::trunc);
        if (!out) throw Io("cannot open " + args.json_out + " for writing");
        out << summary.dump(2) << '\n';
    }
    return 0;
}

int run_retrieve(const RetrieveArgs& args) {
    const VectorDataset dataset = read_dataset(args.data);
    const EmbeddingMatrix embeddings = load_normalized_embeddings(args.embeddings);
    const LabelVector labels = labels_of(dataset);
    if (args.query >= embeddings.n) {
        throw IndexOutOfRange("retrieve: query " + std::to_string(args.query) +
                              " out of range for " + std::to_string(embeddings.n) + " rows");
    }

    const std::size_t queries[1] = {args.query};
    const PurityReport report = retrieval_report(embeddings, labels, queries, args.k);
    const auto& entry = report.per_query.front();

    std::printf("query %zu (class %d%s)\n", args.query, labels.labels[args.query],
                labels.has_modes()
                    ? (", mode " + std::to_string(labels.modes[args.query])).c_str()
                    : "");
    for (std::size_t r = 0; r < entry.retrieved.size(); ++r) {
        const std::uint32_t j = entry.retrieved[r];
        const double score = row_dot(embeddings.row(args.query), embeddings.row(j));
        std::printf("%zu: index %u score %.6f class %d", r + 1, j, score, labels.labels[j]);
        if (labels.has_modes()) std::printf(" mode %d", labels.modes[j]);
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"SCAN contrastive pre-training engine"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic benchmark dataset");
    gen_cmd->add_option("--classes", gen.spec.classes, "number of classes")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--modes", gen.spec.modes_per_class, "appearance modes per class")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--dim", gen.spec.dim, "feature dimension")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--per-mode", gen.spec.samples_per_mode, "samples per mode")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--class-radius", gen.spec.class_center_radius, "class center radius");
    gen_cmd->add_option("--mode-radius", gen.spec.mode_offset_radius, "mode offset radius");
    gen_cmd->add_option("--noise", gen.spec.noise_sigma, "per-coordinate noise sigma");
    gen_cmd->add_option("--seed", gen.spec.seed, "random seed");
    gen_cmd->add_option("--out", gen.out, "output dataset path")->required();

    PretrainArgs pre;
    auto* pre_cmd = app.add_subcommand("pretrain", "run contrastive pre-training");
    pre_cmd->add_option("--data", pre.data, "dataset path (SCNV)")->required();
    pre_cmd->add_option("--mode", pre.mode, "training objective")
        ->check(CLI::IsMember({"moco", "scan", "scl"}));
    pre_cmd->add_option("--neighbors", pre.neighbors, "neighbor table (SCNT), required for scan");
    pre_cmd->add_option("--out", pre.out, "output checkpoint path")->required();
    pre_cmd->add_option("--log", pre.log, "epoch log CSV path");
    pre_cmd->add_option("--s", pre.config.queries_per_batch, "queries (anchors) per batch");
    pre_cmd->add_option("--k", pre.config.neighbors, "positive neighbors per anchor");
    pre_cmd->add_option("--tau", pre.config.temperature, "softmax temperature");
    pre_cmd->add_option("--lr", pre.config.base_lr, "base learning rate");
    pre_cmd->add_option("--sgd-momentum", pre.config.sgd_momentum, "SGD momentum");
    pre_cmd->add_option("--weight-decay", pre.config.weight_decay, "L2 weight decay");
    pre_cmd->add_option("--epochs", pre.config.epochs, "training epochs");
    pre_cmd->add_option("--bank", pre.config.bank_capacity, "memory bank capacity");
    pre_cmd->add_option("--bank-init", pre.bank_init, "bank initialization")
        ->check(CLI::IsMember({"random", "empty"}));
    pre_cmd->add_option("--encoder-momentum", pre.config.encoder_momentum, "key encoder momentum");
    pre_cmd->add_option("--aug-scale", pre.config.augment.scale_sigma, "view scale jitter sigma");
    pre_cmd->add_option("--aug-noise", pre.config.augment.noise_sigma, "view additive noise sigma");
    pre_cmd->add_option("--aug-drop", pre.config.augment.drop_prob, "view coordinate drop probability");
    pre_cmd->add_option("--hidden", pre.hidden, "hidden layer sizes");
    pre_cmd->add_option("--embed-dim", pre.config.embedding_dim, "embedding dimension");
    pre_cmd->add_option("--denominator", pre.denominator, "loss denominator convention")
        ->check(CLI::IsMember({"paper", "infonce"}));
    pre_cmd->add_option("--seed", pre.config.seed, "random seed");
    pre_cmd->set_config("--config", "", "key = value config file; command line overrides");
    pre_cmd->allow_config_extras(false);

    EmbedArgs emb;
    auto* emb_cmd = app.add_subcommand("embed", "embed a dataset with a trained checkpoint");
    emb_cmd->add_option("--checkpoint", emb.checkpoint, "checkpoint path (SCNC)")->required();
    emb_cmd->add_option("--data", emb.data, "dataset path (SCNV)")->required();
    emb_cmd->add_option("--out", emb.out, "output embeddings path (SCNE)")->required();
    emb_cmd->add_option("--tap", emb.tap, "which features to emit")
        ->check(CLI::IsMember({"final", "penultimate"}));
    emb_cmd->add_option("--batch", emb.batch, "forward batch size")->check(CLI::PositiveNumber);

    MineArgs mine;
    auto* mine_cmd = app.add_subcommand("mine", "mine positive neighbors");
    mine_cmd->add_option("--data", mine.data, "dataset path (SCNV), provides labels")->required();
    mine_cmd->add_option("--embeddings", mine.embeddings,
                         "appearance embeddings (SCNE) from a bootstrap checkpoint");
    mine_cmd->add_option("--k", mine.k, "neighbors per query");
    mine_cmd->add_option("--out", mine.out, "output table path (SCNT)")->required();
    mine_cmd->add_option("--workers", mine.workers, "query shard count (0 = auto)");
    mine_cmd->add_option("--appearance-source", mine.appearance_source,
                         "where appearance features come from")
        ->check(CLI::IsMember({"bootstrap-checkpoint", "raw"}));

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "probe and retrieval evaluation");
    eval_cmd->add_option("--data", eval.data, "dataset path (SCNV)")->required();
    eval_cmd->add_option("--embeddings", eval.embeddings, "embeddings path (SCNE)")->required();
    eval_cmd->add_option("--probe", eval.probe, "probe type")
        ->check(CLI::IsMember({"knn", "linear", "both", "none"}));
    eval_cmd->add_option("--knn-k", eval.knn_k, "k for the knn probe")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--retrieval-k", eval.retrieval_k, "k for retrieval purity")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--test-fraction", eval.test_fraction, "held-out fraction for probes")
        ->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--seed", eval.seed, "split seed");
    eval_cmd->add_option("--json", eval.json_out, "summary JSON path");
    eval_cmd->add_option("--csv", eval.csv_out, "per-query CSV path");

    RetrieveArgs ret;
    auto* ret_cmd = app.add_subcommand("retrieve", "dump top-k neighbors of one query");
    ret_cmd->add_option("--data", ret.data, "dataset path (SCNV)")->required();
    ret_cmd->add_option("--embeddings", ret.embeddings, "embeddings path (SCNE)")->required();
    ret_cmd->add_option("--query", ret.query, "query index")->required();
    ret_cmd->add_option("--k", ret.k, "neighbors to list");

    try {
        app.parse(argc, argv);

        // Cross-option usage rules that CLI11 cannot express directly.
        if (pre_cmd->parsed() && pre.mode == "scan" && pre.neighbors.empty()) {
            std::cerr << "usage error: --mode scan requires --neighbors <table.scnt>\n";
            return 1;
        }
        if (mine_cmd->parsed() && mine.appearance_source == "bootstrap-checkpoint" &&
            mine.embeddings.empty()) {
            std::cerr << "usage error: --appearance-source bootstrap-checkpoint requires "
                         "--embeddings <emb.scne>\n";
            return 1;
        }

        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (pre_cmd->parsed()) return run_pretrain(pre);
        if (emb_cmd->parsed()) return run_embed(emb);
        if (mine_cmd->parsed()) return run_mine(mine);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (ret_cmd->parsed()) return run_retrieve(ret);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace scan::cli
