#include <unistd.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fallmon/dataset.hpp"
#include "fallmon/errors.hpp"
#include "fallmon/fallnet.hpp"
#include "fallmon/gradcheck_suite.hpp"
#include "fallmon/kv.hpp"
#include "fallmon/sentinel.hpp"
#include "fallmon/tello/client.hpp"
#include "fallmon/tello/mock.hpp"
#include "fallmon/tello/source.hpp"

using namespace fallmon;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3, kDiverged = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

void install_signal_handlers() {
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
}

std::string option_key(const CLI::Option* opt) {
    auto name = opt->get_single_name();
    return name;
}

bool is_plumbing(const CLI::Option* opt) {
    const auto key = option_key(opt);
    return key == "help" || key == "config" || key.empty();
}

/// Applies `key = value` lines to options not already given on the command line.
void apply_config_file(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    for (const auto& [raw_key, value] : kv::load(path)) {
        std::string key = raw_key;
        std::replace(key.begin(), key.end(), '_', '-');
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) opt = sub->get_option_no_throw(key);
        if (opt == nullptr || is_plumbing(opt)) {
            throw UsageError("config file " + path + ": unknown key '" + raw_key + "' for '" + sub->get_name() + "'");
        }
        if (opt->count() > 0) continue;  // flags win
        if (value.empty() && opt->get_expected_max() > 1) continue;
        try {
            if (opt->get_expected_max() > 1) {
                std::stringstream items(value);
                for (std::string item; std::getline(items, item, ',');) {
                    const auto trimmed = std::string(kv::trim(item));
                    if (!trimmed.empty()) opt->add_result(trimmed);
                }
            } else {
                opt->add_result(value);
            }
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("config file " + path + ": " + key + ": " + e.what());
        }
    }
}

void print_resolved(const CLI::App* sub) {
    std::cout << "# fallmon " << sub->get_name() << " resolved config\n";
    for (const CLI::Option* opt : sub->get_options()) {
        if (is_plumbing(opt)) continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
        } else {
            value = opt->get_default_str();
            if (value.empty() && opt->get_expected_max() == 0) value = "false";
            if (value == "{}") value.clear();
        }
        std::cout << option_key(opt) << " = " << value << "\n";
    }
    std::cout << std::flush;
}

void require(const CLI::App* sub, const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError(sub->get_name() + ": " + flag + " is required");
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// --- train ---------------------------------------------------------------------

struct TrainOptions {
    std::string data;
    std::size_t epochs = 5;
    double lr = 1e-4;
    std::size_t batch = 4;
    std::uint64_t seed = 0;
    std::string init = "he";
    double val_fraction = 0.2;
    std::uint64_t split_seed = data::kDefaultSplitSeed;
    std::size_t size = 64;
    std::string out = "fallnet.ckpt";
    std::string curves = "curves.csv";
};

int run_train(const TrainOptions& o, const CLI::App* sub) {
    require(sub, o.data, "--data");
    fallnet::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.learning_rate = o.lr;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.validate();
    const auto init = fallnet::parse_init_scheme(o.init);

    const auto manifest = data::load_manifest(o.data);
    const auto split = data::stratified_split(manifest, o.val_fraction, o.split_seed);
    const auto train_set = data::to_samples(split.train, o.size);
    const auto val_set = data::to_samples(split.val, o.size);
    std::cout << "dataset: " << manifest.entries.size() << " images (" << manifest.count(Label::Fall) << " fall, "
              << manifest.count(Label::NotFall) << " not_fall); train " << train_set.size() << ", val "
              << val_set.size() << "\n";

    auto model = fallnet::build_fallnet({o.size, o.size, 3}, o.seed, init);
    std::cout << "model: " << model.layers().size() << " layers, " << model.parameter_count() << " parameters\n\n";
    std::cout << "Epoch  Loss       Accuracy  Val Loss   Val Accuracy\n";
    auto row = [](const fallnet::EpochStats& s) {
        char line[128];
        std::snprintf(line, sizeof line, "%-6zu %-10.4f %-9.4f %-10.4f %.4f", s.epoch, s.train_loss, s.train_accuracy,
                      s.val_loss, s.val_accuracy);
        std::cout << line << std::endl;
    };
    const auto stats = fallnet::train(model, train_set, val_set, cfg, row);

    fallnet::save_checkpoint(model, o.out);
    data::export_curves(stats, o.curves);
    std::cout << "\ncheckpoint: " << o.out << "\ncurves: " << o.curves << "\n";
    return kOk;
}

// --- eval ----------------------------------------------------------------------

struct EvalOptions {
    std::string model;
    std::string data;
    double threshold = 0.5;
    std::vector<std::uint64_t> counts;
};

void print_metrics(const data::Metrics& m, bool with_loss) {
    std::cout << "tp = " << m.tp << "\nfp = " << m.fp << "\nfn = " << m.fn << "\ntn = " << m.tn << "\n"
              << "precision = " << fixed(m.precision, 5) << (m.precision_undefined ? " (undefined: no positive predictions)" : "")
              << "\nrecall = " << fixed(m.recall, 5) << (m.recall_undefined ? " (undefined: no fall samples)" : "")
              << "\naccuracy = " << fixed(m.accuracy, 5) << "\nf1 = " << fixed(m.f1, 5) << "\n";
    if (with_loss) std::cout << "mean_loss = " << fixed(m.mean_loss, 6) << "\n";
}

int run_eval(const EvalOptions& o, const CLI::App* sub) {
    if (!o.counts.empty()) {
        if (o.counts.size() != 4) throw UsageError("eval: --counts takes TP,FP,FN,TN");
        print_metrics(data::metrics_from_counts(o.counts[0], o.counts[1], o.counts[2], o.counts[3]), false);
        return kOk;
    }
    require(sub, o.model, "--model");
    require(sub, o.data, "--data");
    const auto model = fallnet::load_checkpoint(o.model);
    const auto manifest = data::load_manifest(o.data);
    const auto samples = data::load_samples(manifest, model.input_shape()[0]);
    print_metrics(data::evaluate(model, samples, o.threshold), true);
    return kOk;
}

// --- predict -------------------------------------------------------------------

struct PredictOptions {
    std::string model;
    std::vector<std::string> images;
    double threshold = 0.5;
};

int run_predict(const PredictOptions& o, const CLI::App* sub) {
    require(sub, o.model, "--model");
    if (o.images.empty()) throw UsageError("predict: give at least one image");
    const auto model = fallnet::load_checkpoint(o.model);
    for (const auto& path : o.images) {
        const auto img = data::load_model_input(path, model.input_shape()[0]);
        const double p = model.forward(img);
        const auto label = fallnet::predict_label(p, o.threshold);
        std::cout << path << " " << fixed(p, 6) << " " << (label == fallnet::Prediction::Fall ? "fall" : "not_fall")
                  << "\n";
    }
    return kOk;
}

// --- monitor -------------------------------------------------------------------

struct MonitorOptions {
    std::string model = "stub:brightness";
    std::string source = "mock";
    std::string replay;
    double fps = 30;
    std::string host;
    std::uint16_t command_port = tello::kCommandPort;
    std::uint16_t video_port = tello::kVideoPort;
    double command_timeout = 5;
    double idle_timeout = 3;
    std::string stream_out = "stream.h264";
    double fall_high = 0.65;
    double fall_low = 0.35;
    double presence = 0.02;
    std::size_t debounce = 5;
    double prompt_timeout = 30;
    std::vector<std::string> contacts;
    std::string alert_log = "alerts.jsonl";
    std::string reposition = "right 30";
    double reposition_timeout = 3;
    bool stdin_responses = true;
};

sentinel::ScoreFn make_scorer(const std::string& name) {
    if (name == "stub:brightness") return sentinel::brightness_probability;
    if (name.rfind("stub:", 0) == 0) throw UsageError("unknown stub model '" + name + "' (stub:brightness)");
    auto model = std::make_shared<const fallnet::FallNet>(fallnet::load_checkpoint(name));
    return [model](const Image& img) -> double {
        const auto& shape = model->input_shape();
        if (img.shape() == shape) return model->forward(img);
        return model->forward(data::resize_bilinear(img, shape[0], shape[1]));
    };
}

int run_monitor_cmd(const MonitorOptions& o) {
    sentinel::SentinelConfig cfg;
    cfg.fall_threshold_high = o.fall_high;
    cfg.fall_threshold_low = o.fall_low;
    cfg.presence_threshold = o.presence;
    cfg.debounce_frames = o.debounce;
    cfg.prompt_timeout = o.prompt_timeout;
    cfg.contacts = o.contacts;
    cfg.alert_log = o.alert_log;
    cfg.reposition_command = o.reposition;
    cfg.reposition_timeout = o.reposition_timeout;
    cfg.validate();

    const auto score = make_scorer(o.model);
    const auto idle = std::chrono::milliseconds(static_cast<long>(o.idle_timeout * 1000));

    std::unique_ptr<tello::FrameSource> source;
    std::unique_ptr<tello::DroneClient> drone;
    if (o.source == "replay") {
        if (o.replay.empty()) throw UsageError("monitor: --source replay needs --replay DIR");
        source = std::make_unique<tello::DirectoryReplaySource>(o.replay, o.fps);
    } else if (o.source == "mock" || o.source == "drone") {
        const bool real = o.source == "drone";
        if (real) {
            source = std::make_unique<tello::PassthroughRecorder>(o.video_port, o.stream_out, idle);
        } else {
            source = std::make_unique<tello::MockWireSource>(o.video_port, idle);
        }
        tello::DroneClient::Config cc;
        cc.host = !o.host.empty() ? o.host : real ? std::string("192.168.10.1") : std::string("127.0.0.1");
        cc.command_port = o.command_port;
        cc.timeout = std::chrono::milliseconds(static_cast<long>(o.command_timeout * 1000));
        drone = std::make_unique<tello::DroneClient>(cc);
        for (const char* cmd : {"command", "streamon"}) {
            const auto r = drone->send_command(cmd);
            if (r.kind == tello::ResponseKind::Timeout) {
                throw IoError("drone at " + cc.host + ":" + std::to_string(o.command_port) + " did not answer '" + cmd +
                              "'");
            }
            std::cout << "drone: " << cmd << " -> " << r.response << "\n";
        }
    } else {
        throw UsageError("monitor: --source must be mock, replay or drone");
    }

    sentinel::MonitorOptions mo;
    mo.log = &std::cout;
    mo.response_fd = o.stdin_responses ? STDIN_FILENO : -1;
    mo.drone = drone.get();
    mo.stop = &g_stop;
    const auto summary = sentinel::run_monitor(*source, score, cfg, mo);
    if (o.source == "drone") {
        const auto* rec = static_cast<const tello::PassthroughRecorder*>(source.get());
        std::cout << "recorded " << rec->bytes_written() << " bytes of encoded video to " << o.stream_out << "\n";
    }
    std::cout << "summary: " << summary.format() << std::endl;
    return kOk;
}

// --- simulate ------------------------------------------------------------------

struct SimulateOptions {
    std::uint16_t command_port = tello::kCommandPort;
    std::uint16_t state_port = tello::kStatePort;
    std::uint16_t video_port = tello::kVideoPort;
    std::string replay;
    double fps = 30;
    double loss = 0;
    std::string battery = "100@0";
    double time_scale = 1;
    double telemetry_hz = 10;
    std::uint64_t seed = 0;
    bool loop = false;
    double duration = 0;
};

int run_simulate(const SimulateOptions& o, const CLI::App*) {
    tello::MockConfig mc;
    mc.command_port = o.command_port;
    mc.state_port = o.state_port;
    mc.video_port = o.video_port;
    mc.replay_dir = o.replay;
    mc.fps = o.fps;
    mc.loss_rate = o.loss;
    mc.battery = tello::parse_battery_script(o.battery);
    mc.time_scale = o.time_scale;
    mc.telemetry_hz = o.telemetry_hz;
    mc.seed = o.seed;
    mc.loop = o.loop;
    // Same checks as a mock config file.
    tello::parse_mock_config(tello::format_mock_config(mc));

    tello::MockDrone mock(mc);
    std::cout << "mock drone listening on udp:" << mock.command_port() << std::endl;
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        if (o.duration > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= o.duration) {
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    mock.stop();
    const auto stats = mock.stats();
    std::cout << "command log:\n";
    for (const auto& c : mock.command_log()) std::cout << "  " << c << "\n";
    std::cout << "frames_sent = " << stats.frames_sent << "\npackets_sent = " << stats.packets_sent
              << "\npackets_lost = " << stats.packets_lost << "\ntelemetry_sent = " << stats.telemetry_sent
              << std::endl;
    return kOk;
}

// --- gradcheck -----------------------------------------------------------------

struct GradcheckOptions {
    std::uint64_t seed = 1;
    std::size_t seeds = gradcheck::kDefaultSeeds;
    bool inject_fault = false;
};

int run_gradcheck(const GradcheckOptions& o, const CLI::App*) {
    gradcheck::Options opts;
    opts.seed = o.seed;
    opts.seeds = o.seeds;
    if (o.inject_fault) {
        opts.dense_backward = [](const nn::Tensor<double>& x, const nn::Tensor<double>& w,
                                 const nn::Tensor<double>& up) {
            auto g = nn::dense_backward(x, w, up);
            g.weights[0] *= 1.5;
            return g;
        };
    }
    const auto report = gradcheck::run(opts);
    std::cout << report.format();
    std::cout << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
              << gradcheck::kTolerance << ")" << std::endl;
    return report.passed() ? kOk : kCheckFailed;
}

// --- convert / synth -------------------------------------------------------------

struct ConvertOptions {
    std::string input;
    std::string out;
    std::size_t size = 64;
};

int run_convert(const ConvertOptions& o, const CLI::App* sub) {
    require(sub, o.input, "--input");
    require(sub, o.out, "--out");
    std::error_code ec;
    if (fs::is_directory(o.input, ec)) {
        const auto manifest = data::load_manifest(o.input);
        std::size_t n = 0;
        for (const auto& e : manifest.entries) {
            const auto dest = fs::path(o.out) / to_string(e.label) / e.path.filename().replace_extension(".ppm");
            fs::create_directories(dest.parent_path());
            data::save_p6(data::load_model_input(e.path, o.size), dest);
            ++n;
        }
        std::cout << "converted " << n << " images into " << o.out << "\n";
    } else {
        data::save_p6(data::load_model_input(o.input, o.size), o.out);
        std::cout << "wrote " << o.out << "\n";
    }
    return kOk;
}

struct SynthOptions {
    std::string kind = "poses";
    std::size_t count = 200;
    std::uint64_t seed = 1;
    std::size_t size = 64;
    std::string scenario;
    std::string out;
};

int run_synth(const SynthOptions& o, const CLI::App* sub) {
    require(sub, o.out, "--out");
    if (!o.scenario.empty()) {
        const auto levels = sentinel::scenario_levels(o.scenario);
        sentinel::write_scenario(o.out, levels, o.size);
        std::cout << "wrote " << levels.size() << " '" << o.scenario << "' frames to " << o.out << "\n";
        return kOk;
    }
    std::vector<LabeledSample> samples;
    if (o.kind == "brightness") {
        samples = data::synthetic_brightness(o.count, o.seed, o.size);
    } else if (o.kind == "poses") {
        samples = data::synthetic_poses(o.count, o.seed, o.size);
    } else {
        throw UsageError("synth: --kind must be brightness or poses");
    }
    data::write_dataset(samples, o.out);
    std::cout << "wrote " << samples.size() << " images to " << o.out << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    CLI::App app{"Drone-assisted fall detection: training, evaluation, monitoring and simulation"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::map<CLI::App*, std::string> config_paths;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_paths[sub], "key = value file; flags override it");
    };

    TrainOptions train;
    auto* t = app.add_subcommand("train", "Train FallNet on a labelled image directory");
    t->add_option("--data", train.data, "dataset root (fall/ and not_fall/, or manifest.csv)");
    t->add_option("--epochs", train.epochs, "training epochs")->check(CLI::PositiveNumber);
    t->add_option("--lr", train.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    t->add_option("--batch", train.batch, "mini-batch size")->check(CLI::PositiveNumber);
    t->add_option("--seed", train.seed, "initialisation and shuffle seed");
    t->add_option("--init", train.init, "weight initialisation")->check(CLI::IsMember({"he", "fixed-0.01"}));
    t->add_option("--val-fraction", train.val_fraction, "share of each class held out")->check(CLI::Range(0.0, 1.0));
    t->add_option("--split-seed", train.split_seed, "train/validation split seed");
    t->add_option("--size", train.size, "model input side in pixels")->check(CLI::PositiveNumber);
    t->add_option("--out", train.out, "checkpoint path");
    t->add_option("--curves", train.curves, "learning-curve CSV path");
    add_config(t);

    EvalOptions eval;
    auto* e = app.add_subcommand("eval", "Score a checkpoint on a labelled image directory");
    e->add_option("--model", eval.model, "checkpoint");
    e->add_option("--data", eval.data, "dataset root");
    e->add_option("--threshold", eval.threshold, "fall threshold")->check(CLI::Range(0.0, 1.0));
    e->add_option("--counts", eval.counts, "report metrics for TP,FP,FN,TN instead")->delimiter(',');
    add_config(e);

    PredictOptions predict;
    auto* p = app.add_subcommand("predict", "Print P(fall) for individual images");
    p->add_option("--model", predict.model, "checkpoint");
    p->add_option("--threshold", predict.threshold, "fall threshold")->check(CLI::Range(0.0, 1.0));
    p->add_option("images", predict.images, "NetPBM images");
    add_config(p);

    MonitorOptions monitor;
    auto* m = app.add_subcommand("monitor", "Run the fall-monitoring loop on a live or replayed stream");
    m->add_option("--model", monitor.model, "checkpoint, or stub:brightness");
    m->add_option("--source", monitor.source, "frame source")->check(CLI::IsMember({"mock", "replay", "drone"}));
    m->add_option("--replay", monitor.replay, "frame directory for --source replay");
    m->add_option("--fps", monitor.fps, "replay pace (0 = as fast as possible)")->check(CLI::NonNegativeNumber);
    m->add_option("--host", monitor.host, "drone address (default 127.0.0.1 for mock, 192.168.10.1 for drone)");
    m->add_option("--command-port", monitor.command_port, "drone command port");
    m->add_option("--video-port", monitor.video_port, "local video port");
    m->add_option("--command-timeout", monitor.command_timeout, "seconds per command attempt")
        ->check(CLI::PositiveNumber);
    m->add_option("--idle-timeout", monitor.idle_timeout, "seconds of video silence that end the stream")
        ->check(CLI::PositiveNumber);
    m->add_option("--stream-out", monitor.stream_out, "where --source drone records the encoded stream");
    m->add_option("--fall-high", monitor.fall_high, "probability at or above which a frame looks like a fall");
    m->add_option("--fall-low", monitor.fall_low, "probability at or below which a frame looks safe");
    m->add_option("--presence", monitor.presence, "mean frame difference that counts as presence");
    m->add_option("--debounce", monitor.debounce, "frames per decision window");
    m->add_option("--prompt-timeout", monitor.prompt_timeout, "seconds to wait for an answer");
    m->add_option("--contact", monitor.contacts, "webhook URL to notify (repeatable)");
    m->add_option("--alert-log", monitor.alert_log, "JSON-lines alert log");
    m->add_option("--reposition", monitor.reposition, "drone command used to change viewpoint");
    m->add_option("--reposition-timeout", monitor.reposition_timeout, "seconds before a move is assumed done");
    m->add_flag("--stdin-responses,!--no-stdin-responses", monitor.stdin_responses,
                "read yes/no answers from standard input");
    add_config(m);

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "Serve a mock drone for hardware-free runs");
    s->add_option("--command-port", sim.command_port, "port the mock listens on for commands");
    s->add_option("--state-port", sim.state_port, "client port telemetry is sent to");
    s->add_option("--video-port", sim.video_port, "client port video is sent to");
    s->add_option("--replay,--replay-dir", sim.replay, "NetPBM frames to stream after streamon");
    s->add_option("--fps", sim.fps, "stream rate")->check(CLI::PositiveNumber);
    s->add_option("--loss,--loss-rate", sim.loss, "probability a video packet is lost")->check(CLI::Range(0.0, 1.0));
    s->add_option("--battery", sim.battery, "battery script, PERCENT@SECONDS,...");
    s->add_option("--time-scale", sim.time_scale, "scripted seconds per real second")->check(CLI::PositiveNumber);
    s->add_option("--telemetry-hz", sim.telemetry_hz, "telemetry rate")->check(CLI::PositiveNumber);
    s->add_option("--seed", sim.seed, "packet-loss seed");
    s->add_flag("--loop", sim.loop, "restart the replay when it ends");
    s->add_option("--duration", sim.duration, "stop after this many seconds (0 = until interrupted)")
        ->check(CLI::NonNegativeNumber);
    add_config(s);

    GradcheckOptions grad;
    auto* g = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    g->add_option("--seed", grad.seed, "first seed");
    g->add_option("--seeds", grad.seeds, "number of seeds")->check(CLI::PositiveNumber);
    g->add_flag("--inject-fault", grad.inject_fault, "corrupt the dense backward pass (self-test)");
    add_config(g);

    ConvertOptions convert;
    auto* c = app.add_subcommand("convert", "Resize NetPBM images (or a dataset tree) to model input");
    c->add_option("--input", convert.input, "image or dataset root");
    c->add_option("--out", convert.out, "output image or directory");
    c->add_option("--size", convert.size, "output side in pixels")->check(CLI::PositiveNumber);
    add_config(c);

    SynthOptions synth;
    auto* y = app.add_subcommand("synth", "Generate a synthetic dataset or a scripted frame sequence");
    y->add_option("--kind", synth.kind, "dataset kind")->check(CLI::IsMember({"brightness", "poses"}));
    y->add_option("--count", synth.count, "images")->check(CLI::PositiveNumber);
    y->add_option("--seed", synth.seed, "generator seed");
    y->add_option("--size", synth.size, "image side")->check(CLI::PositiveNumber);
    y->add_option("--scenario", synth.scenario, "fall, nofall or uncertain frame sequence");
    y->add_option("--out", synth.out, "output directory");
    add_config(y);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kUsage;
    }

    install_signal_handlers();
    CLI::App* sub = app.get_subcommands().front();
    try {
        apply_config_file(sub, config_paths[sub]);
        print_resolved(sub);
        if (sub == t) return run_train(train, sub);
        if (sub == e) return run_eval(eval, sub);
        if (sub == p) return run_predict(predict, sub);
        if (sub == m) return run_monitor_cmd(monitor);
        if (sub == s) return run_simulate(sim, sub);
        if (sub == g) return run_gradcheck(grad, sub);
        if (sub == c) return run_convert(convert, sub);
        if (sub == y) return run_synth(synth, sub);
    } catch (const UsageError& ex) {
        std::cerr << "error: " << ex.what() << "\n\n" << sub->help();
        return kUsage;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n\n" << sub->help();
        return kUsage;
    } catch (const TrainingDiverged& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kDiverged;
    } catch (const std::exception& ex) {
        // Ingestion, format, socket and file problems.
        std::cerr << "error: " << ex.what() << "\n";
        return kIo;
    }
    return kUsage;
}
