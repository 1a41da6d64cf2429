#include "fallmon/sentinel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fallmon/dataset.hpp"
#include "fallmon/errors.hpp"

namespace fallmon::sentinel {

using json = nlohmann::json;

const char* to_string(State s) {
    switch (s) {
        case State::Scanning: return "Scanning";
        case State::Assessing: return "Assessing";
        case State::FallSuspected: return "FallSuspected";
        case State::PromptingHelp: return "PromptingHelp";
        case State::Alarming: return "Alarming";
        case State::Repositioning: return "Repositioning";
    }
    return "?";
}

const char* to_string(Decision d) {
    switch (d) {
        case Decision::NoFall: return "NoFall";
        case Decision::Fall: return "Fall";
        case Decision::Uncertain: return "Uncertain";
    }
    return "?";
}

const char* to_string(Trigger t) { return t == Trigger::UserConfirmed ? "user-confirmed" : "no-answer"; }

const char* event_name(const Event& e) {
    static constexpr const char* names[] = {"FrameScored", "UserResponse", "Timeout", "RepositionComplete"};
    return names[e.index()];
}

void SentinelConfig::validate() const {
    if (!(fall_threshold_low >= 0 && fall_threshold_low < fall_threshold_high && fall_threshold_high <= 1)) {
        throw ConfigError("fall thresholds must satisfy 0 <= low < high <= 1");
    }
    if (!(presence_threshold >= 0)) throw ConfigError("presence threshold must not be negative");
    if (debounce_frames < 1) throw ConfigError("debounce window needs at least one frame");
    if (!(prompt_timeout > 0)) throw ConfigError("prompt timeout must be positive");
    if (!(reposition_timeout > 0)) throw ConfigError("reposition timeout must be positive");
    if (alert_log.empty()) throw ConfigError("an alert log path is required");
}

double presence_score(const Image& previous, const Image& frame) {
    if (previous.shape() != frame.shape()) {
        throw ShapeError("presence needs equal frame shapes, got " + nn::to_string(previous.shape()) + " and " +
                         nn::to_string(frame.shape()));
    }
    double sum = 0;
    const auto a = previous.values();
    const auto b = frame.values();
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(static_cast<double>(a[i]) - b[i]);
    return sum / static_cast<double>(a.size());
}

WindowDecision classify_window(std::span<const double> recent, const SentinelConfig& config) {
    if (recent.size() < config.debounce_frames) return {Decision::NoFall, true};
    const auto window = recent.last(config.debounce_frames);
    const bool all_high = std::all_of(window.begin(), window.end(),
                                      [&](double p) { return p >= config.fall_threshold_high; });
    const bool all_low = std::all_of(window.begin(), window.end(),
                                     [&](double p) { return p <= config.fall_threshold_low; });
    if (all_high) return {Decision::Fall, false};
    if (all_low) return {Decision::NoFall, false};
    return {Decision::Uncertain, false};
}

namespace {

std::string format_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", t);
    return buf;
}

void enter(Machine& m, State to, double now) {
    std::string entry = std::string(to_string(m.state)) + "->" + to_string(to) + "@" + format_time(now);
    m.trace.push_back(std::move(entry));
    if (m.trace.size() > kTraceLength) m.trace.erase(m.trace.begin());
    m.state = to;
    m.entered_at = now;
    if (to != State::PromptingHelp) m.deadline.reset();
    if (to != State::Assessing && to != State::FallSuspected) m.window.clear();
}

AlertRecord make_record(const Machine& m, Trigger trigger, double now) {
    return {now, trigger, m.trigger_probability, m.trace, m.evidence_ref};
}

StepResult ignore(const Machine& m, const Event& e) {
    StepResult r{m, {}, true, std::string(event_name(e)) + " ignored in " + to_string(m.state)};
    return r;
}

/// Adds a frame to the assessment window and acts on a full window.
StepResult assess(const Machine& m, const FrameScored& f, const SentinelConfig& cfg, double now) {
    StepResult r{m, {}, false, {}};
    Machine& n = r.next;
    n.window.push_back(f.probability);
    n.evidence_ref = f.frame_ref;

    const auto verdict = classify_window(n.window, cfg);
    if (verdict.pending) {
        const bool suspicious = std::any_of(n.window.begin(), n.window.end(),
                                            [&](double p) { return p >= cfg.fall_threshold_high; });
        const State want = suspicious ? State::FallSuspected : State::Assessing;
        if (want != n.state) enter(n, want, now);
        r.note = "window " + std::to_string(n.window.size()) + "/" + std::to_string(cfg.debounce_frames);
        return r;
    }
    r.note = std::string("window decision ") + to_string(verdict.decision);
    switch (verdict.decision) {
        case Decision::Fall: {
            n.trigger_probability = f.probability;
            enter(n, State::PromptingHelp, now);
            n.deadline = now + cfg.prompt_timeout;
            r.actions.push_back(EmitPrompt{*n.deadline});
            r.actions.push_back(ArmTimer{*n.deadline});
            break;
        }
        case Decision::NoFall: enter(n, State::Scanning, now); break;
        case Decision::Uncertain:
            enter(n, State::Repositioning, now);
            r.actions.push_back(Reposition{cfg.reposition_command});
            break;
    }
    return r;
}

}  // namespace

StepResult step(const Machine& m, const Event& event, const SentinelConfig& cfg, double now) {
    if (const auto* f = std::get_if<FrameScored>(&event)) {
        if (!(f->probability >= 0 && f->probability <= 1) || !(f->presence >= 0)) {
            StepResult r = ignore(m, event);
            r.note = "malformed FrameScored ignored";
            return r;
        }
    }

    switch (m.state) {
        case State::Scanning: {
            const auto* f = std::get_if<FrameScored>(&event);
            if (!f) return ignore(m, event);
            if (f->presence < cfg.presence_threshold) return {m, {}, false, "no presence"};
            Machine entered = m;
            entered.window.clear();
            enter(entered, State::Assessing, now);
            auto r = assess(entered, *f, cfg, now);
            r.note = "presence " + format_time(f->presence) + "; " + r.note;
            return r;
        }
        case State::Assessing:
        case State::FallSuspected: {
            const auto* f = std::get_if<FrameScored>(&event);
            if (!f) return ignore(m, event);
            return assess(m, *f, cfg, now);
        }
        case State::PromptingHelp: {
            StepResult r{m, {}, false, {}};
            if (const auto* u = std::get_if<UserResponse>(&event)) {
                if (u->yes) {
                    enter(r.next, State::Alarming, now);
                    r.actions.push_back(DispatchAlert{make_record(r.next, Trigger::UserConfirmed, now)});
                    r.note = "user asked for help";
                } else {
                    enter(r.next, State::Scanning, now);
                    r.actions.push_back(CancelTimer{});
                    r.note = "user declined help";
                }
                return r;
            }
            if (std::holds_alternative<Timeout>(event)) {
                if (!m.deadline || now < *m.deadline) {
                    StepResult early = ignore(m, event);
                    early.note = "Timeout before the prompt deadline ignored";
                    return early;
                }
                enter(r.next, State::Alarming, now);
                r.actions.push_back(DispatchAlert{make_record(r.next, Trigger::NoAnswer, now)});
                r.note = "prompt unanswered";
                return r;
            }
            return ignore(m, event);
        }
        case State::Alarming: {
            if (!std::holds_alternative<FrameScored>(event)) return ignore(m, event);
            StepResult r{m, {}, false, "alarm raised; scanning again"};
            enter(r.next, State::Scanning, now);
            return r;
        }
        case State::Repositioning: {
            if (!std::holds_alternative<RepositionComplete>(event)) return ignore(m, event);
            StepResult r{m, {}, false, "reassessing from the new position"};
            enter(r.next, State::Assessing, now);
            r.next.window.clear();
            return r;
        }
    }
    return ignore(m, event);
}

// --- Alert records ------------------------------------------------------------------

namespace {

std::string iso8601(double epoch_seconds) {
    const auto whole = static_cast<std::time_t>(std::floor(epoch_seconds));
    int millis = static_cast<int>(std::lround((epoch_seconds - static_cast<double>(whole)) * 1000));
    std::time_t secs = whole;
    if (millis == 1000) {
        millis = 0;
        ++secs;
    }
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
    return buf;
}

double parse_iso8601(const std::string& s) {
    std::tm tm{};
    int millis = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour, &tm.tm_min,
                    &tm.tm_sec, &millis) != 7) {
        throw FormatError("bad alert timestamp '" + s + "'", 0);
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return static_cast<double>(timegm(&tm)) + millis / 1000.0;
}

}  // namespace

std::string to_json_line(const AlertRecord& r) {
    const json j = {{"timestamp", iso8601(r.timestamp)},
                    {"trigger", to_string(r.trigger)},
                    {"probability", r.probability},
                    {"stateTrace", r.state_trace},
                    {"frameRef", r.frame_ref}};
    return j.dump();
}

AlertRecord alert_from_json(const std::string& line) {
    try {
        const auto j = json::parse(line);
        AlertRecord r;
        r.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
        const auto trigger = j.at("trigger").get<std::string>();
        if (trigger == "user-confirmed") {
            r.trigger = Trigger::UserConfirmed;
        } else if (trigger == "no-answer") {
            r.trigger = Trigger::NoAnswer;
        } else {
            throw FormatError("unknown alert trigger '" + trigger + "'", 0);
        }
        r.probability = j.at("probability").get<double>();
        r.state_trace = j.at("stateTrace").get<std::vector<std::string>>();
        r.frame_ref = j.at("frameRef").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad alert record: ") + e.what(), 0);
    }
}

double brightness_probability(const Image& image) {
    double sum = 0;
    for (float v : image.values()) sum += v;
    return std::clamp(sum / static_cast<double>(image.size()), 0.0, 1.0);
}

// --- Scenarios -----------------------------------------------------------------------

std::vector<float> scenario_levels(const std::string& name) {
    std::vector<float> out;
    auto add = [&](std::size_t n, float level) { out.insert(out.end(), n, level); };
    if (name == "fall") {
        add(20, kNoFallLevel);
        add(30, kFallLevel);
    } else if (name == "nofall") {
        // Someone moving about upright, then standing still.
        for (int i = 0; i < 45; ++i) out.push_back(i % 2 ? kNoFallLevel + 0.05f : kNoFallLevel);
        add(5, out.back());
    } else if (name == "uncertain") {
        add(20, kNoFallLevel);
        add(5, kUncertainLevel);
        add(25, kNoFallLevel);
    } else {
        throw ConfigError("unknown scenario '" + name + "' (fall, nofall, uncertain)");
    }
    return out;
}

void write_scenario(const std::filesystem::path& dir, std::span<const float> levels, std::size_t side) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.ppm", i);
        data::save_p6(Image({side, side, 3}, levels[i]), dir / name);
    }
}

std::string MonitorSummary::format() const {
    std::ostringstream out;
    out << "frames=" << frames << " alarms=" << alarms << " prompts=" << prompts << " repositions=" << repositions
        << " drops=" << video_drops + source_drops << " (queue " << video_drops << ", link " << source_drops << ")"
        << " final_state=" << to_string(final_state);
    return out.str();
}

}  // namespace fallmon::sentinel
