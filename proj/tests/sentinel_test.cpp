#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "fallmon/errors.hpp"
#include "fallmon/sentinel.hpp"
#include "fallmon/tello/client.hpp"
#include "fallmon/tello/mock.hpp"
#include "fallmon/tello/source.hpp"
#include "fallmon/tello/udp.hpp"

using namespace fallmon;
using namespace fallmon::sentinel;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fallmon_sentinel_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

template <typename T>
std::size_t count_actions(const std::vector<Action>& actions) {
    return std::count_if(actions.begin(), actions.end(), [](const Action& a) { return std::holds_alternative<T>(a); });
}

Machine in_state(State s, double now = 100) {
    Machine m;
    m.state = s;
    m.entered_at = now;
    if (s == State::PromptingHelp) m.deadline = now + 30;
    return m;
}

FrameScored frame(double p, double presence = 0.5) { return {p, presence, 0, "f"}; }

Image random_image(std::uint64_t seed, std::size_t side = 16) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0, 1);
    Image img({side, side, 3});
    for (auto& v : img.values()) v = u(rng);
    return img;
}

}  // namespace

// --- Presence and window --------------------------------------------------------

TEST(Presence, Examples) {
    const auto img = random_image(1);
    EXPECT_EQ(presence_score(img, img), 0.0);
    EXPECT_EQ(presence_score(Image({4, 4, 3}, 0.0f), Image({4, 4, 3}, 1.0f)), 1.0);
    EXPECT_THROW(presence_score(Image({4, 4, 3}), Image({4, 5, 3})), ShapeError);
}

TEST(Presence, InverseMatchesClosedForm) {
    // Half the pixels at 0 or 1, half at 0.5: mean 0.5, mean |1-2x| = 0.5.
    Image img({2, 2, 1}, std::vector<float>{0.0f, 1.0f, 0.5f, 0.5f});
    Image inv = img;
    for (auto& v : inv.values()) v = 1 - v;
    EXPECT_DOUBLE_EQ(presence_score(img, inv), 0.5);

    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto r = random_image(s);
        Image ri = r;
        for (auto& v : ri.values()) v = 1 - v;
        double closed = 0;
        for (float x : r.values()) closed += std::abs(1.0 - 2.0 * x);
        closed /= static_cast<double>(r.size());
        EXPECT_NEAR(presence_score(r, ri), closed, 1e-6);
    }
}

TEST(Window, Rule) {
    const SentinelConfig cfg;
    const std::vector<double> fall = {0.9, 0.9, 0.9, 0.9, 0.9};
    const std::vector<double> calm = {0.1, 0.1, 0.1, 0.1, 0.1};
    const std::vector<double> mixed = {0.9, 0.5, 0.9, 0.9, 0.9};
    EXPECT_EQ(classify_window(fall, cfg).decision, Decision::Fall);
    EXPECT_EQ(classify_window(calm, cfg).decision, Decision::NoFall);
    EXPECT_EQ(classify_window(mixed, cfg).decision, Decision::Uncertain);
    const std::vector<double> edges_high = {0.65, 0.65, 0.65, 0.65, 0.65};
    const std::vector<double> edges_low = {0.35, 0.35, 0.35, 0.35, 0.35};
    EXPECT_EQ(classify_window(edges_high, cfg).decision, Decision::Fall);
    EXPECT_EQ(classify_window(edges_low, cfg).decision, Decision::NoFall);
    const std::vector<double> short_window = {0.9, 0.9};
    const auto d = classify_window(short_window, cfg);
    EXPECT_TRUE(d.pending);
    EXPECT_EQ(d.decision, Decision::NoFall);
}

TEST(Window, MatchesBruteForceOverGrid) {
    SentinelConfig cfg;
    cfg.debounce_frames = 3;
    const double levels[] = {0.0, 0.3, 0.35, 0.5, 0.65, 0.7, 1.0};
    for (double a : levels)
        for (double b : levels)
            for (double c : levels) {
                const std::vector<double> w = {a, b, c};
                int high = 0, low = 0;
                for (double p : w) {
                    high += p >= 0.65;
                    low += p <= 0.35;
                }
                const Decision expected = high == 3 ? Decision::Fall : low == 3 ? Decision::NoFall : Decision::Uncertain;
                EXPECT_EQ(classify_window(w, cfg).decision, expected);
            }
}

TEST(Config, Validation) {
    SentinelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.fall_threshold_low = 0.7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.debounce_frames = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.prompt_timeout = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.fall_threshold_high = 1.1;
    EXPECT_THROW(c.validate(), ConfigError);
}

// --- Transition table ---------------------------------------------------------------

struct Expectation {
    State from;
    std::size_t event;  // variant index
    State to;
    bool ignored;
    std::size_t prompts, timers, cancels, moves, alerts;
};

TEST(Step, AllTwentyFourPairs) {
    SentinelConfig cfg;
    cfg.debounce_frames = 1;  // one frame decides, so every frame pair has a single outcome
    const double now = 200;
    const Event events[] = {FrameScored{0.9, 0.5, now, "x"}, UserResponse{true}, Timeout{}, RepositionComplete{}};

    const std::vector<Expectation> table = {
        {State::Scanning, 0, State::PromptingHelp, false, 1, 1, 0, 0, 0},
        {State::Scanning, 1, State::Scanning, true, 0, 0, 0, 0, 0},
        {State::Scanning, 2, State::Scanning, true, 0, 0, 0, 0, 0},
        {State::Scanning, 3, State::Scanning, true, 0, 0, 0, 0, 0},
        {State::Assessing, 0, State::PromptingHelp, false, 1, 1, 0, 0, 0},
        {State::Assessing, 1, State::Assessing, true, 0, 0, 0, 0, 0},
        {State::Assessing, 2, State::Assessing, true, 0, 0, 0, 0, 0},
        {State::Assessing, 3, State::Assessing, true, 0, 0, 0, 0, 0},
        {State::FallSuspected, 0, State::PromptingHelp, false, 1, 1, 0, 0, 0},
        {State::FallSuspected, 1, State::FallSuspected, true, 0, 0, 0, 0, 0},
        {State::FallSuspected, 2, State::FallSuspected, true, 0, 0, 0, 0, 0},
        {State::FallSuspected, 3, State::FallSuspected, true, 0, 0, 0, 0, 0},
        {State::PromptingHelp, 0, State::PromptingHelp, true, 0, 0, 0, 0, 0},
        {State::PromptingHelp, 1, State::Alarming, false, 0, 0, 0, 0, 1},
        {State::PromptingHelp, 2, State::Alarming, false, 0, 0, 0, 0, 1},
        {State::PromptingHelp, 3, State::PromptingHelp, true, 0, 0, 0, 0, 0},
        {State::Alarming, 0, State::Scanning, false, 0, 0, 0, 0, 0},
        {State::Alarming, 1, State::Alarming, true, 0, 0, 0, 0, 0},
        {State::Alarming, 2, State::Alarming, true, 0, 0, 0, 0, 0},
        {State::Alarming, 3, State::Alarming, true, 0, 0, 0, 0, 0},
        {State::Repositioning, 0, State::Repositioning, true, 0, 0, 0, 0, 0},
        {State::Repositioning, 1, State::Repositioning, true, 0, 0, 0, 0, 0},
        {State::Repositioning, 2, State::Repositioning, true, 0, 0, 0, 0, 0},
        {State::Repositioning, 3, State::Assessing, false, 0, 0, 0, 0, 0},
    };
    ASSERT_EQ(table.size(), 24u);

    for (const auto& row : table) {
        Machine m = in_state(row.from, now - 60);  // prompt deadline (now - 30) has passed
        const auto r = step(m, events[row.event], cfg, now);
        const std::string where = std::string(to_string(row.from)) + " + " + event_name(events[row.event]);
        EXPECT_EQ(r.next.state, row.to) << where;
        EXPECT_EQ(r.ignored, row.ignored) << where;
        EXPECT_EQ(count_actions<EmitPrompt>(r.actions), row.prompts) << where;
        EXPECT_EQ(count_actions<ArmTimer>(r.actions), row.timers) << where;
        EXPECT_EQ(count_actions<CancelTimer>(r.actions), row.cancels) << where;
        EXPECT_EQ(count_actions<Reposition>(r.actions), row.moves) << where;
        EXPECT_EQ(count_actions<DispatchAlert>(r.actions), row.alerts) << where;
        if (row.ignored) {
            EXPECT_EQ(r.next.state, m.state);
            EXPECT_EQ(r.next.trace, m.trace);
            EXPECT_TRUE(r.actions.empty());
        }
        EXPECT_EQ(r.next.deadline.has_value(), r.next.state == State::PromptingHelp) << where;
    }
}

TEST(Step, ReferenceExamples) {
    const SentinelConfig cfg;
    // Unanswered prompt raises the alarm once.
    Machine prompting = in_state(State::PromptingHelp, 0);
    const auto timeout = step(prompting, Timeout{}, cfg, 31);
    EXPECT_EQ(timeout.next.state, State::Alarming);
    ASSERT_EQ(timeout.actions.size(), 1u);
    const auto& alert = std::get<DispatchAlert>(timeout.actions[0]).record;
    EXPECT_EQ(alert.trigger, Trigger::NoAnswer);

    // Uncertain window moves the drone once.
    Machine assessing = in_state(State::Assessing);
    assessing.window = {0.9, 0.5, 0.9, 0.9};
    const auto unsure = step(assessing, frame(0.9), cfg, 101);
    EXPECT_EQ(unsure.next.state, State::Repositioning);
    ASSERT_EQ(unsure.actions.size(), 1u);
    EXPECT_EQ(std::get<Reposition>(unsure.actions[0]).command, "right 30");

    // Stray answer while scanning does nothing.
    const auto stray = step(in_state(State::Scanning), UserResponse{true}, cfg, 5);
    EXPECT_EQ(stray.next.state, State::Scanning);
    EXPECT_TRUE(stray.actions.empty());
    EXPECT_TRUE(stray.ignored);
}

TEST(Step, DebounceWalkThrough) {
    const SentinelConfig cfg;
    Machine m;
    auto r = step(m, frame(0.2, 0.001), cfg, 1);
    EXPECT_EQ(r.next.state, State::Scanning);  // below presence threshold
    r = step(r.next, frame(0.2, 0.3), cfg, 2);
    EXPECT_EQ(r.next.state, State::Assessing);
    r = step(r.next, frame(0.9), cfg, 3);
    EXPECT_EQ(r.next.state, State::FallSuspected);
    for (int i = 0; i < 2; ++i) r = step(r.next, frame(0.9), cfg, 4 + i);
    EXPECT_EQ(r.next.state, State::FallSuspected);
    r = step(r.next, frame(0.9), cfg, 6);
    EXPECT_EQ(r.next.state, State::Repositioning);  // window {0.2,0.9,0.9,0.9,0.9} is mixed
    r = step(r.next, RepositionComplete{}, cfg, 7);
    EXPECT_EQ(r.next.state, State::Assessing);
    EXPECT_TRUE(r.next.window.empty());
    for (int i = 0; i < 4; ++i) r = step(r.next, frame(0.95), cfg, 8 + i);
    EXPECT_EQ(r.next.state, State::FallSuspected);
    r = step(r.next, frame(0.95), cfg, 12);
    EXPECT_EQ(r.next.state, State::PromptingHelp);
    ASSERT_TRUE(r.next.deadline.has_value());
    EXPECT_EQ(*r.next.deadline, 42);
    EXPECT_EQ(std::get<ArmTimer>(r.actions[1]).deadline, 42);

    const auto early = step(r.next, Timeout{}, cfg, 41.9);
    EXPECT_TRUE(early.ignored);
    EXPECT_EQ(early.next.state, State::PromptingHelp);
    const auto no = step(r.next, UserResponse{false}, cfg, 20);
    EXPECT_EQ(no.next.state, State::Scanning);
    EXPECT_EQ(count_actions<CancelTimer>(no.actions), 1u);
    const auto yes = step(r.next, UserResponse{true}, cfg, 20);
    const auto& rec = std::get<DispatchAlert>(yes.actions[0]).record;
    EXPECT_EQ(rec.trigger, Trigger::UserConfirmed);
    EXPECT_DOUBLE_EQ(rec.probability, 0.95);
    EXPECT_EQ(rec.timestamp, 20);
    EXPECT_EQ(rec.state_trace.back(), "PromptingHelp->Alarming@20.000");
}

TEST(Step, IsPure) {
    const SentinelConfig cfg;
    std::mt19937_64 rng(3);
    Machine m = in_state(State::Assessing);
    m.window = {0.7, 0.8};
    for (int i = 0; i < 100; ++i) {
        const Event e = FrameScored{(rng() % 100) / 100.0, 0.5, 0, "r"};
        const auto a = step(m, e, cfg, 5);
        const auto b = step(m, e, cfg, 5);
        EXPECT_EQ(a.next.state, b.next.state);
        EXPECT_EQ(a.next.window, b.next.window);
        EXPECT_EQ(a.next.trace, b.next.trace);
        EXPECT_EQ(a.actions.size(), b.actions.size());
        EXPECT_EQ(a.note, b.note);
    }
}

TEST(Step, MalformedFramesAreIgnored) {
    const SentinelConfig cfg;
    EXPECT_TRUE(step(in_state(State::Assessing), frame(1.5), cfg, 0).ignored);
    EXPECT_TRUE(step(in_state(State::Scanning), frame(0.5, -1), cfg, 0).ignored);
    EXPECT_TRUE(step(in_state(State::Scanning), frame(std::nan(""), 1), cfg, 0).ignored);
}

TEST(Step, RandomSequencesKeepInvariants) {
    SentinelConfig cfg;
    cfg.prompt_timeout = 3;
    std::mt19937_64 rng(77);
    std::size_t total_alarms = 0;
    for (int seq = 0; seq < 1000; ++seq) {
        Machine m;
        double now = 0;
        std::size_t alarms = 0, alarming_entries = 0;
        bool alarm_armed = true;        // a fresh debounce window has been completed
        std::size_t frames_in_window = 0;
        std::optional<double> prompt_at;
        for (int i = 0; i < 200; ++i) {
            now += (rng() % 1000) / 1000.0;
            Event e;
            switch (rng() % 8) {
                case 0: e = UserResponse{rng() % 2 == 0}; break;
                case 1: e = Timeout{}; break;
                case 2: e = RepositionComplete{}; break;
                default: {
                    const double p = rng() % 3 == 0 ? (rng() % 100) / 100.0 : (rng() % 2 ? 0.9 : 0.1);
                    e = FrameScored{p, (rng() % 10) / 100.0, now, "s"};
                }
            }
            const State before = m.state;
            const auto r = step(m, e, cfg, now);
            const State after = r.next.state;

            if ((before == State::Assessing || before == State::FallSuspected || before == State::Scanning) &&
                std::holds_alternative<FrameScored>(e) &&
                (after == State::Assessing || after == State::FallSuspected || after == State::PromptingHelp)) {
                ++frames_in_window;
            }
            if (after == State::Scanning || after == State::Repositioning) frames_in_window = 0;
            if (after == State::PromptingHelp && before != State::PromptingHelp) {
                EXPECT_GE(frames_in_window, cfg.debounce_frames);
                frames_in_window = 0;
                alarm_armed = true;
                prompt_at = now;
            }
            const auto dispatched = count_actions<DispatchAlert>(r.actions);
            if (dispatched) {
                EXPECT_TRUE(alarm_armed) << "second alarm without a fresh window";
                alarm_armed = false;
                EXPECT_EQ(before, State::PromptingHelp);
                EXPECT_EQ(after, State::Alarming);
                if (std::holds_alternative<Timeout>(e)) {
                    ASSERT_TRUE(prompt_at.has_value());
                    EXPECT_GE(now - *prompt_at, cfg.prompt_timeout - 1e-9);
                }
            }
            alarms += dispatched;
            alarming_entries += after == State::Alarming && before != State::Alarming;
            EXPECT_EQ(r.next.deadline.has_value(), after == State::PromptingHelp);
            EXPECT_LE(r.next.trace.size(), kTraceLength);
            if (r.ignored) EXPECT_TRUE(r.actions.empty());
            m = r.next;
        }
        EXPECT_EQ(alarms, alarming_entries);
        total_alarms += alarms;
    }
    EXPECT_GT(total_alarms, 100u);
}

// --- Alert records and delivery ------------------------------------------------------

TEST(Alert, JsonSchema) {
    AlertRecord r{1700000000.25, Trigger::NoAnswer, 0.93, {"Scanning->Assessing@1.000"}, "frames/0042.ppm"};
    const auto line = to_json_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    const auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::sort(keys.begin(), keys.end());
    EXPECT_EQ(keys, (std::vector<std::string>{"frameRef", "probability", "stateTrace", "timestamp", "trigger"}));
    EXPECT_EQ(j["timestamp"], "2023-11-14T22:13:20.250Z");
    EXPECT_EQ(j["trigger"], "no-answer");
    const auto back = alert_from_json(line);
    EXPECT_DOUBLE_EQ(back.timestamp, r.timestamp);
    EXPECT_EQ(back.state_trace, r.state_trace);
    EXPECT_EQ(back.frame_ref, r.frame_ref);
    EXPECT_THROW(alert_from_json("{}"), FormatError);
}

TEST(Dispatch, LogOnlyAppendsOneLine) {
    const auto dir = fresh_dir("log_only");
    const auto log = dir / "alerts.jsonl";
    AlertRecord r{1.0, Trigger::UserConfirmed, 0.8, {}, "x.ppm"};
    auto report = dispatch_alert(r, log, {});
    ASSERT_EQ(report.sinks.size(), 1u);
    EXPECT_TRUE(report.sinks[0].delivered);
    EXPECT_FALSE(report.total_failure());
    dispatch_alert(r, log, {});
    const auto lines = read_lines(log);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(alert_from_json(lines[0]).trigger, Trigger::UserConfirmed);
}

TEST(Dispatch, LogFailureIsHardError) {
    AlertRecord r;
    EXPECT_THROW(dispatch_alert(r, fs::temp_directory_path() / "fallmon_missing_dir" / "a.jsonl", {}), IoError);
}

TEST(Dispatch, Webhooks) {
    httplib::Server server;
    std::atomic<int> ok_hits{0}, fail_hits{0};
    std::string last_body;
    std::mutex body_mutex;
    server.Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
        ++ok_hits;
        std::lock_guard lock(body_mutex);
        last_body = req.body;
        res.status = 200;
    });
    server.Post("/fail", [&](const httplib::Request&, httplib::Response& res) {
        ++fail_hits;
        res.status = 500;
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::uint16_t closed_port;
    {
        tello::UdpSocket probe(0);
        closed_port = probe.port();
    }
    const auto dir = fresh_dir("webhooks");
    AlertRecord r{2.0, Trigger::NoAnswer, 0.9, {"a"}, "f"};
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    const auto report = dispatch_alert(
        r, dir / "a.jsonl", {base + "/ok", base + "/fail", "http://127.0.0.1:" + std::to_string(closed_port) + "/x"},
        1000ms);
    server.stop();
    t.join();

    ASSERT_EQ(report.sinks.size(), 4u);
    EXPECT_TRUE(report.sinks[1].delivered);
    EXPECT_EQ(report.sinks[1].attempts, 1);
    EXPECT_FALSE(report.sinks[2].delivered);
    EXPECT_EQ(report.sinks[2].attempts, 2);
    EXPECT_EQ(fail_hits, 2);
    EXPECT_FALSE(report.sinks[3].delivered);
    EXPECT_EQ(report.sinks[3].attempts, 2);
    EXPECT_FALSE(report.total_failure());
    EXPECT_EQ(alert_from_json(last_body).trigger, Trigger::NoAnswer);
    EXPECT_EQ(read_lines(dir / "a.jsonl").size(), 1u);

    const auto dead = dispatch_alert(r, dir / "a.jsonl", {"http://127.0.0.1:" + std::to_string(closed_port) + "/"},
                                     500ms);
    EXPECT_TRUE(dead.total_failure());
    EXPECT_EQ(read_lines(dir / "a.jsonl").size(), 2u);
}

// --- Monitor ----------------------------------------------------------------------

namespace {

SentinelConfig monitor_config(const fs::path& dir, double prompt_timeout) {
    SentinelConfig cfg;
    cfg.prompt_timeout = prompt_timeout;
    cfg.alert_log = dir / "alerts.jsonl";
    return cfg;
}

MonitorOptions quiet(std::ostream* log = nullptr) {
    MonitorOptions o;
    o.log = log;
    o.video_queue = 4096;
    return o;
}

}  // namespace

TEST(Monitor, ScriptedFallRaisesOneUnansweredAlarm) {
    const auto dir = fresh_dir("mon_fall");
    const auto levels = scenario_levels("fall");
    write_scenario(dir / "frames", levels, 16);
    tello::DirectoryReplaySource src(dir / "frames", 0);
    std::ostringstream log;
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 0.3), quiet(&log));
    EXPECT_EQ(s.frames, 50u);
    EXPECT_EQ(s.alarms, 1u);
    EXPECT_EQ(s.prompts, 1u);
    ASSERT_EQ(s.alerts.size(), 1u);
    EXPECT_EQ(s.alerts[0].trigger, Trigger::NoAnswer);
    EXPECT_NE(s.alerts[0].frame_ref.find("0024.ppm"), std::string::npos);
    const auto lines = read_lines(dir / "alerts.jsonl");
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(alert_from_json(lines[0]).trigger, Trigger::NoAnswer);
    EXPECT_NE(log.str().find("PromptingHelp -> Alarming"), std::string::npos);
}

TEST(Monitor, NoFallSequenceRaisesNothing) {
    const auto dir = fresh_dir("mon_nofall");
    write_scenario(dir / "frames", scenario_levels("nofall"), 16);
    tello::DirectoryReplaySource src(dir / "frames", 0);
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 0.3), quiet());
    EXPECT_EQ(s.frames, 50u);
    EXPECT_EQ(s.alarms, 0u);
    EXPECT_EQ(s.prompts, 0u);
    EXPECT_EQ(s.final_state, State::Scanning);
    EXPECT_FALSE(fs::exists(dir / "alerts.jsonl"));
}

TEST(Monitor, UserSaysNo) {
    const auto dir = fresh_dir("mon_no");
    write_scenario(dir / "frames", scenario_levels("fall"), 16);
    tello::DirectoryReplaySource src(dir / "frames", 30);
    int fds[2];
    ASSERT_EQ(::pipe(fds), 0);
    std::thread answer([&] {
        std::this_thread::sleep_for(1200ms);  // prompt is up after frame 24 (~0.8 s)
        [[maybe_unused]] auto n = ::write(fds[1], "no\n", 3);
    });
    auto opts = quiet();
    opts.response_fd = fds[0];
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 3), opts);
    answer.join();
    ::close(fds[0]);
    ::close(fds[1]);
    EXPECT_EQ(s.prompts, 1u);
    EXPECT_EQ(s.alarms, 0u);
}

TEST(Monitor, UserSaysYes) {
    const auto dir = fresh_dir("mon_yes");
    write_scenario(dir / "frames", scenario_levels("fall"), 16);
    tello::DirectoryReplaySource src(dir / "frames", 30);
    int fds[2];
    ASSERT_EQ(::pipe(fds), 0);
    std::thread answer([&] {
        std::this_thread::sleep_for(1200ms);
        [[maybe_unused]] auto n = ::write(fds[1], "yes\n", 4);
    });
    auto opts = quiet();
    opts.response_fd = fds[0];
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 3), opts);
    answer.join();
    ::close(fds[0]);
    ::close(fds[1]);
    ASSERT_EQ(s.alarms, 1u);
    EXPECT_EQ(s.alerts[0].trigger, Trigger::UserConfirmed);
}

TEST(Monitor, UncertainWindowMovesDroneOnce) {
    const auto dir = fresh_dir("mon_uncertain");
    write_scenario(dir / "frames", scenario_levels("uncertain"), 16);

    tello::MockConfig mc;
    mc.command_port = 0;
    tello::MockDrone mock(mc);
    tello::DroneClient::Config cc;
    cc.host = "127.0.0.1";
    cc.command_port = mock.command_port();
    tello::DroneClient drone(cc);

    tello::DirectoryReplaySource src(dir / "frames", 0);
    auto opts = quiet();
    opts.drone = &drone;
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 0.3), opts);
    EXPECT_EQ(s.repositions, 1u);
    EXPECT_EQ(s.alarms, 0u);
    const auto commands = mock.command_log();
    EXPECT_EQ(std::count(commands.begin(), commands.end(), "right 30"), 1);
}

TEST(Monitor, StopFlagEndsRun) {
    const auto dir = fresh_dir("mon_stop");
    write_scenario(dir / "frames", std::vector<float>(300, 0.2f), 8);
    tello::DirectoryReplaySource src(dir / "frames", 30);
    std::atomic<bool> stop{false};
    auto opts = quiet();
    opts.stop = &stop;
    std::thread stopper([&] {
        std::this_thread::sleep_for(300ms);
        stop = true;
    });
    const auto start = std::chrono::steady_clock::now();
    const auto s = run_monitor(src, brightness_probability, monitor_config(dir, 1), opts);
    stopper.join();
    EXPECT_LT(std::chrono::steady_clock::now() - start, 3s);
    EXPECT_LT(s.frames, 300u);
}

TEST(Monitor, ScoringErrorPropagates) {
    const auto dir = fresh_dir("mon_err");
    write_scenario(dir / "frames", std::vector<float>(5, 0.2f), 8);
    tello::DirectoryReplaySource src(dir / "frames", 0);
    auto bad = [](const Image&) -> double { throw ShapeError("wrong input"); };
    EXPECT_THROW(run_monitor(src, bad, monitor_config(dir, 1), quiet()), ShapeError);
}
