// Command-line surface: dataset generation, training, evaluation, the
// ablation sweeps, and per-step trace inspection.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmrn/checkpoint.hpp"
#include "dmrn/config.hpp"
#include "dmrn/dataset_io.hpp"
#include "dmrn/training.hpp"

namespace {

using namespace dmrn;

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
}

cfgio::Settings load_settings(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    cfgio::Settings s;
    if (!config_path.empty()) cfgio::apply(s, cfgio::parse_kv_file(config_path));
    std::map<std::string, std::string> kv;
    for (const std::string& o : overrides) {
        const auto parsed = cfgio::parse_kv_text(o);
        kv.insert(parsed.begin(), parsed.end());
    }
    cfgio::apply(s, kv);
    return s;
}

// Appends rows; writes the header only when the file is new or empty.
class CsvAppender {
  public:
    CsvAppender(const std::string& path, const std::string& header) {
        const bool fresh =
            !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
        out_.open(path, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
        if (fresh) out_ << header << '\n';
    }
    void row(const std::string& line) {
        out_ << line << '\n';
        out_.flush();
    }

  private:
    std::ofstream out_;
};

RolloutOptions dynamic_options(const TrainConfig& tc) {
    RolloutOptions opts;
    opts.stop_mode = StopMode::dynamic;
    opts.t_max = tc.t_max;
    return opts;
}

RolloutOptions fixed_options(std::size_t k) {
    RolloutOptions opts;
    opts.stop_mode = StopMode::fixed;
    opts.fixed_k = k;
    return opts;
}

int cmd_gen(const std::string& config, const std::vector<std::string>& overrides,
            const std::string& out, std::uint64_t seed, std::size_t count, int max_hops) {
    const cfgio::Settings s = load_settings(config, overrides);
    const auto data = dataio::make_dataset(seed, count, s.gen, max_hops);
    dataio::save_jsonl(out, data);
    std::cout << "wrote " << data.size() << " instances to " << out << "\n";
    return 0;
}

// Trains from scratch or resumes; writes a checkpoint after every epoch and
// appends one metrics row per epoch.
int cmd_train(const std::string& config, const std::vector<std::string>& overrides,
              const std::string& data_path, const std::string& out,
              const std::string& metrics, const std::string& resume, std::size_t epochs_flag) {
    ModelConfig mc;
    TrainConfig tc;
    std::size_t start_epoch = 1;
    Checkpoint resume_ck;
    if (!resume.empty()) {
        resume_ck = load_checkpoint(resume);
        mc = cfgio::model_from_json(resume_ck.header.at("model"));
        tc = cfgio::train_from_json(resume_ck.header.at("train"));
        start_epoch = resume_ck.header.at("epoch").get<std::size_t>() + 1;
    } else {
        const cfgio::Settings s = load_settings(config, overrides);
        mc = s.model;
        tc = s.train;
    }
    if (epochs_flag > 0) tc.epochs = epochs_flag;

    const auto data = dataio::load_jsonl(data_path);
    Model model(mc, tc.seed);
    RMSProp opt(model.params());
    if (!resume.empty()) restore(model, &opt, resume_ck);

    CsvAppender csv(metrics, "epoch,loss,accuracy,mean_steps,lr");
    if (tc.epochs + 1 <= start_epoch) {
        save_checkpoint(out, snapshot(model, &opt, tc, start_epoch - 1));
        return 0;
    }
    for (std::size_t epoch = start_epoch; epoch <= tc.epochs; ++epoch) {
        const EpochStats st = train_epoch(model, opt, data, tc, epoch);
        csv.row(std::to_string(epoch) + "," + fmt(st.loss) + "," + fmt(st.accuracy) + "," +
                fmt(st.mean_steps) + "," + fmt(st.lr));
        save_checkpoint(out, snapshot(model, &opt, tc, epoch));
        std::cout << "epoch " << epoch << " loss " << fmt(st.loss) << " accuracy "
                  << fmt(st.accuracy) << " mean_steps " << fmt(st.mean_steps) << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& mode, std::size_t k) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const ModelConfig mc = cfgio::model_from_json(ck.header.at("model"));
    const TrainConfig tc = cfgio::train_from_json(ck.header.at("train"));
    Model model(mc, tc.seed);
    restore(model, nullptr, ck);
    const auto data = dataio::load_jsonl(data_path);

    RolloutOptions opts;
    if (mode == "dynamic") {
        opts = dynamic_options(tc);
    } else if (mode == "fixed") {
        opts = fixed_options(k);
    } else {
        throw std::runtime_error("eval: mode must be 'dynamic' or 'fixed'");
    }
    const EvalStats st = evaluate(model, data, opts);
    std::cout << "accuracy=" << fmt(st.accuracy) << " mean_steps=" << fmt(st.mean_steps)
              << " count=" << st.count << "\n";
    for (const auto& [hops, acc] : st.accuracy_by_hops) {
        std::cout << "hops=" << hops << " accuracy=" << fmt(acc)
                  << " mean_steps=" << fmt(st.mean_steps_by_hops.at(hops)) << "\n";
    }
    return 0;
}

Model train_fresh(const ModelConfig& mc, TrainConfig tc,
                  const std::vector<synth::GroundingInstance>& data) {
    Model model(mc, tc.seed);
    RMSProp opt(model.params());
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        train_epoch(model, opt, data, tc, epoch);
    }
    return model;
}

int cmd_ablate(const std::string& kind, const std::string& config,
               const std::vector<std::string>& overrides, const std::string& train_path,
               const std::string& eval_path, const std::string& out,
               const std::string& ckpt_path, std::size_t n_seeds) {
    const cfgio::Settings s = load_settings(config, overrides);
    const auto train_data = dataio::load_jsonl(train_path);
    const auto eval_data = dataio::load_jsonl(eval_path);

    CsvAppender csv(out, "config,accuracy,mean_steps");
    auto emit = [&](const std::string& name, double acc, double steps) {
        csv.row(name + "," + fmt(acc) + "," + fmt(steps));
        std::cout << name << " accuracy " << fmt(acc) << " mean_steps " << fmt(steps) << "\n";
    };

    if (kind == "iterations") {
        // one trained model evaluated at several fixed step counts plus the
        // learned dynamic stopping rule
        Model model = [&]() {
            if (!ckpt_path.empty()) {
                const Checkpoint ck = load_checkpoint(ckpt_path);
                Model m(cfgio::model_from_json(ck.header.at("model")),
                        cfgio::train_from_json(ck.header.at("train")).seed);
                restore(m, nullptr, ck);
                return m;
            }
            return train_fresh(s.model, s.train, train_data);
        }();
        for (std::size_t k : {1ul, 3ul, 5ul, 8ul, 10ul}) {
            const EvalStats st = evaluate(model, eval_data, fixed_options(k));
            emit("fixed_" + std::to_string(k), st.accuracy, st.mean_steps);
        }
        const EvalStats dyn = evaluate(model, eval_data, dynamic_options(s.train));
        emit("dynamic", dyn.accuracy, dyn.mean_steps);
    } else if (kind == "rewards") {
        const std::vector<std::pair<std::string, std::pair<bool, bool>>> rows = {
            {"both", {true, true}},
            {"ultimate_only", {true, false}},
            {"immediate_only", {false, true}},
            {"none", {false, false}},
        };
        for (const auto& [name, flags] : rows) {
            double acc = 0.0, steps = 0.0;
            for (std::size_t i = 0; i < n_seeds; ++i) {
                TrainConfig tc = s.train;
                tc.use_ultimate = flags.first;
                tc.use_immediate = flags.second;
                tc.seed = s.train.seed + i;
                const Model model = train_fresh(s.model, tc, train_data);
                const EvalStats st = evaluate(model, eval_data, dynamic_options(tc));
                acc += st.accuracy;
                steps += st.mean_steps;
            }
            emit(name, acc / n_seeds, steps / n_seeds);
        }
    } else if (kind == "transformer") {
        const std::vector<std::pair<std::size_t, std::size_t>> rows = {
            {1, 1}, {1, 4}, {1, 8}, {2, 4}, {6, 8}};
        for (const auto& [layers, heads] : rows) {
            ModelConfig mc = s.model;
            mc.fusion_layers = layers;
            mc.fusion_heads = heads;
            const Model model = train_fresh(mc, s.train, train_data);
            const EvalStats st = evaluate(model, eval_data, dynamic_options(s.train));
            emit("layers_" + std::to_string(layers) + "_heads_" + std::to_string(heads),
                 st.accuracy, st.mean_steps);
        }
    } else {
        throw std::runtime_error("ablate: kind must be iterations, rewards, or transformer");
    }
    return 0;
}

int cmd_trace(const std::string& ckpt_path, std::uint64_t instance_seed, int hops,
              const std::string& json_out) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const ModelConfig mc = cfgio::model_from_json(ck.header.at("model"));
    const TrainConfig tc = cfgio::train_from_json(ck.header.at("train"));
    Model model(mc, tc.seed);
    restore(model, nullptr, ck);

    synth::GenConfig gen;
    gen.grid_size = static_cast<int>(mc.image_px / 8);
    gen.image_px = static_cast<int>(mc.image_px);
    gen.n_max = static_cast<int>(mc.n_max);
    const synth::GroundingInstance inst = synth::generate_instance(instance_seed, hops, gen);

    ag::Tape t;
    RolloutOptions opts = dynamic_options(tc);
    const RolloutResult res = model.rollout(t, inst, opts, true);

    std::cout << "expression: " << inst.expression_text << "\n";
    std::cout << "target box: [" << inst.gt_box.x_min << "," << inst.gt_box.y_min << ","
              << inst.gt_box.x_max << "," << inst.gt_box.y_max << "]\n";
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
        const StepTrace& st = res.trace[i];
        std::cout << "step " << (i + 1) << ": score " << fmt(st.score) << ", action "
                  << (st.action == kActionStop ? "stop" : "continue") << ", iou "
                  << fmt(st.iou) << "\n  attention:";
        nlohmann::json words = nlohmann::json::array();
        for (std::size_t w = 0; w < st.attention.size(); ++w) {
            if (st.attention[w] > 0.01) {
                std::cout << " " << inst.token_text[w] << "=" << fmt(st.attention[w]);
            }
            words.push_back(st.attention[w]);
        }
        std::cout << "\n";
        steps.push_back({{"step", i + 1},
                         {"score", st.score},
                         {"action", st.action},
                         {"iou", st.iou},
                         {"attention", words},
                         {"history", st.history.data},
                         {"box", {st.box.x_min, st.box.y_min, st.box.x_max, st.box.y_max}}});
    }
    std::cout << "steps executed: " << res.steps_executed << ", final iou " << fmt(res.iou)
              << "\n";
    if (!json_out.empty()) {
        nlohmann::json doc{{"expression", inst.expression_text},
                           {"gt_box",
                            {inst.gt_box.x_min, inst.gt_box.y_min, inst.gt_box.x_max,
                             inst.gt_box.y_max}},
                           {"steps", steps},
                           {"final_iou", res.iou}};
        std::ofstream out(json_out);
        if (!out) throw std::runtime_error("trace: cannot open " + json_out);
        out << doc.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic multi-step reasoning network for referring expressions"};
    app.require_subcommand(1);

    std::string config, data_path, eval_path, out, metrics = "metrics.csv", resume;
    std::string ckpt_path, mode = "dynamic", kind, json_out;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::size_t count = 100, k = 1, epochs_flag = 0, n_seeds = 3;
    int hops = 3;

    auto* gen = app.add_subcommand("gen", "generate a dataset as JSONL");
    gen->add_option("--config", config, "key=value config file");
    gen->add_option("--set", overrides, "inline config override, key=value");
    gen->add_option("--out", out, "output JSONL path")->required();
    gen->add_option("--seed", seed, "dataset seed");
    gen->add_option("--count", count, "number of instances");
    gen->add_option("--max-hops", hops, "hop counts cycle 1..max-hops");

    auto* train = app.add_subcommand("train", "train and checkpoint per epoch");
    train->add_option("--config", config, "key=value config file");
    train->add_option("--set", overrides, "inline config override, key=value");
    train->add_option("--data", data_path, "training JSONL")->required();
    train->add_option("--out", out, "checkpoint path")->required();
    train->add_option("--metrics", metrics, "metrics CSV path (appended)");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--epochs", epochs_flag, "override total epochs (0 = from config)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_path, "evaluation JSONL")->required();
    eval->add_option("--mode", mode, "dynamic or fixed");
    eval->add_option("--k", k, "step count for fixed mode");

    auto* ablate = app.add_subcommand("ablate", "run an ablation sweep to CSV");
    ablate->add_option("--kind", kind, "iterations, rewards, or transformer")->required();
    ablate->add_option("--config", config, "key=value config file");
    ablate->add_option("--set", overrides, "inline config override, key=value");
    ablate->add_option("--train-data", data_path, "training JSONL")->required();
    ablate->add_option("--eval-data", eval_path, "evaluation JSONL")->required();
    ablate->add_option("--out", out, "results CSV path")->required();
    ablate->add_option("--checkpoint", ckpt_path,
                       "pretrained checkpoint (iterations kind only)");
    ablate->add_option("--seeds", n_seeds, "seed count for the rewards sweep");

    auto* trace = app.add_subcommand("trace", "dump per-step reasoning for one instance");
    trace->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
    trace->add_option("--instance-seed", seed, "instance seed");
    trace->add_option("--hops", hops, "expression hop count");
    trace->add_option("--json", json_out, "also write a JSON dump here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(config, overrides, out, seed, count, hops);
        if (train->parsed()) {
            return cmd_train(config, overrides, data_path, out, metrics, resume, epochs_flag);
        }
        if (eval->parsed()) return cmd_eval(ckpt_path, data_path, mode, k);
        if (ablate->parsed()) {
            return cmd_ablate(kind, config, overrides, data_path, eval_path, out, ckpt_path,
                              n_seeds);
        }
        if (trace->parsed()) return cmd_trace(ckpt_path, seed, hops, json_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
