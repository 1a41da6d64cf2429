#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fallmon/sample.hpp"

namespace fallmon::tello {
class DroneClient;
class FrameSource;
}  // namespace fallmon::tello

namespace fallmon::sentinel {

enum class State { Scanning, Assessing, FallSuspected, PromptingHelp, Alarming, Repositioning };
inline constexpr State kAllStates[] = {State::Scanning,      State::Assessing, State::FallSuspected,
                                       State::PromptingHelp, State::Alarming,  State::Repositioning};
const char* to_string(State s);

struct SentinelConfig {
    double fall_threshold_high = 0.65;
    double fall_threshold_low = 0.35;
    double presence_threshold = 0.02;  // mean absolute frame difference
    std::size_t debounce_frames = 5;
    double prompt_timeout = 30;       // seconds
    std::vector<std::string> contacts;  // webhook URLs, in call order
    std::filesystem::path alert_log = "alerts.jsonl";
    std::string reposition_command = "right 30";
    double reposition_timeout = 3;    // seconds before completion is assumed

    /// Throws ConfigError when an invariant is broken.
    void validate() const;
};

// --- Gating and windowed decision ------------------------------------------------

/// Mean absolute per-pixel difference; ShapeError on mismatched frames.
double presence_score(const Image& previous, const Image& frame);

enum class Decision { NoFall, Fall, Uncertain };
const char* to_string(Decision d);

struct WindowDecision {
    Decision decision = Decision::NoFall;
    bool pending = false;  // window not yet full; decision deferred
};

/// Fall iff every entry ≥ high, NoFall iff every entry ≤ low, Uncertain
/// otherwise. Uses the last `debounce_frames` entries.
WindowDecision classify_window(std::span<const double> recent, const SentinelConfig& config);

// --- Events, actions, records ----------------------------------------------------

struct FrameScored {
    double probability = 0;
    double presence = 0;
    double timestamp = 0;
    std::string frame_ref;
};
struct UserResponse {
    bool yes = false;
};
struct Timeout {};
struct RepositionComplete {};
using Event = std::variant<FrameScored, UserResponse, Timeout, RepositionComplete>;
const char* event_name(const Event& e);

enum class Trigger { UserConfirmed, NoAnswer };
const char* to_string(Trigger t);

struct AlertRecord {
    double timestamp = 0;  // seconds since the Unix epoch
    Trigger trigger = Trigger::NoAnswer;
    double probability = 0;
    std::vector<std::string> state_trace;
    std::string frame_ref;
};

/// One JSON object: timestamp (ISO-8601 UTC), trigger, probability, stateTrace, frameRef.
std::string to_json_line(const AlertRecord& record);
AlertRecord alert_from_json(const std::string& line);

struct EmitPrompt {
    double deadline = 0;
};
struct ArmTimer {
    double deadline = 0;
};
struct CancelTimer {};
struct Reposition {
    std::string command;
};
struct DispatchAlert {
    AlertRecord record;
};
using Action = std::variant<EmitPrompt, ArmTimer, CancelTimer, Reposition, DispatchAlert>;

// --- State machine ---------------------------------------------------------------

inline constexpr std::size_t kTraceLength = 12;

struct Machine {
    State state = State::Scanning;
    double entered_at = 0;
    std::vector<double> window;        // probabilities collected while assessing
    std::optional<double> deadline;    // set exactly while PromptingHelp
    double trigger_probability = 0;
    std::string evidence_ref;
    std::vector<std::string> trace;    // "From->To@t", most recent last
};

struct StepResult {
    Machine next;
    std::vector<Action> actions;
    bool ignored = false;  // event had no meaning in this state
    std::string note;
};

/// Pure transition function.
StepResult step(const Machine& machine, const Event& event, const SentinelConfig& config, double now);

// --- Alert delivery ---------------------------------------------------------------

struct SinkResult {
    std::string sink;
    bool delivered = false;
    int attempts = 0;
    std::string detail;
};

struct DeliveryReport {
    std::vector<SinkResult> sinks;  // log first, then webhooks in order

    /// Webhooks were configured and none of them took the alert.
    bool total_failure() const;
};

inline constexpr std::chrono::milliseconds kWebhookTimeout{5000};

/// Appends the record to the log (IoError if that fails), then POSTs it to
/// each webhook, retrying a failed delivery once.
DeliveryReport dispatch_alert(const AlertRecord& record, const std::filesystem::path& log_path,
                              const std::vector<std::string>& webhooks,
                              std::chrono::milliseconds timeout = kWebhookTimeout);

// --- Monitor ----------------------------------------------------------------------

using ScoreFn = std::function<double(const Image&)>;

/// Stub scorer: the frame's mean intensity as the fall probability.
double brightness_probability(const Image& image);

struct MonitorOptions {
    std::ostream* log = nullptr;                  // transition log; null for silence
    int response_fd = -1;                         // "yes"/"no" lines; -1 disables
    tello::DroneClient* drone = nullptr;          // reposition channel; null acknowledges at once
    std::size_t video_queue = 8;                  // frames buffered before the oldest is dropped
    const std::atomic<bool>* stop = nullptr;      // external shutdown request
};

struct MonitorSummary {
    std::size_t frames = 0;
    std::size_t alarms = 0;
    std::size_t prompts = 0;
    std::size_t repositions = 0;
    std::size_t video_drops = 0;   // frames discarded under backpressure
    std::size_t source_drops = 0;  // frames lost before reaching the monitor
    std::size_t ignored_events = 0;
    State final_state = State::Scanning;
    std::vector<AlertRecord> alerts;
    std::vector<DeliveryReport> deliveries;

    std::string format() const;
};

/// Runs ingestion, scoring, and the state machine until the source ends (or
/// `stop` is raised) and any pending prompt has been settled.
MonitorSummary run_monitor(tello::FrameSource& source, const ScoreFn& score, const SentinelConfig& config,
                           const MonitorOptions& options = {});

// --- Scripted scenarios ------------------------------------------------------------

inline constexpr float kNoFallLevel = 0.2f;
inline constexpr float kFallLevel = 0.8f;
inline constexpr float kUncertainLevel = 0.5f;

/// Writes one uniform frame per level as 0000.ppm, 0001.ppm, ...
void write_scenario(const std::filesystem::path& dir, std::span<const float> levels, std::size_t side = 64);

/// Named sequences: "fall" (20 no-fall, 30 fall), "nofall" (45 alternating
/// no-fall levels, then 5 still),
/// "uncertain" (20 no-fall, 5 uncertain, 25 no-fall).
std::vector<float> scenario_levels(const std::string& name);

}  // namespace fallmon::sentinel
