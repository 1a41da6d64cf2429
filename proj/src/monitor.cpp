#include <poll.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "fallmon/dataset.hpp"
#include "fallmon/errors.hpp"
#include "fallmon/queue.hpp"
#include "fallmon/sentinel.hpp"
#include "fallmon/tello/client.hpp"
#include "fallmon/tello/source.hpp"

namespace fallmon::sentinel {

namespace {

using Clock = std::chrono::system_clock;

double wall_now() { return std::chrono::duration<double>(Clock::now().time_since_epoch()).count(); }

constexpr auto kTick = std::chrono::milliseconds(20);

struct Scored {
    Event event;
    Image image;
};

/// Line-oriented reader of "yes"/"no" answers on a file descriptor.
class ResponseReader {
public:
    ResponseReader(int fd, BoundedQueue<Scored>& events, const std::atomic<bool>& done)
        : fd_(fd), events_(events), done_(done) {
        if (fd_ >= 0) thread_ = std::thread([this] { loop(); });
    }
    ~ResponseReader() {
        if (thread_.joinable()) thread_.join();
    }

private:
    void loop() {
        std::string pending;
        char buf[256];
        while (!done_) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            const auto n = ::read(fd_, buf, sizeof buf);
            if (n <= 0) return;
            pending.append(buf, static_cast<std::size_t>(n));
            for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n')) {
                std::string line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
                while (!line.empty() && line.front() == ' ') line.erase(0, 1);
                if (line == "yes" || line == "y") events_.push({UserResponse{true}, {}});
                if (line == "no" || line == "n") events_.push({UserResponse{false}, {}});
            }
        }
    }

    int fd_;
    BoundedQueue<Scored>& events_;
    const std::atomic<bool>& done_;
    std::thread thread_;
};

}  // namespace

MonitorSummary run_monitor(tello::FrameSource& source, const ScoreFn& score, const SentinelConfig& config,
                           const MonitorOptions& options) {
    config.validate();
    MonitorSummary summary;
    std::mutex log_mutex;
    auto log = [&](const std::string& line) {
        if (!options.log) return;
        std::lock_guard lock(log_mutex);
        *options.log << "[" << std::fixed;
        options.log->precision(3);
        *options.log << wall_now() << "] " << line << std::endl;
    };

    BoundedQueue<tello::TimedFrame> video(options.video_queue, Overflow::DropOldest);
    BoundedQueue<Scored> events(1024, Overflow::Block);
    std::atomic<bool> frames_done{false};
    std::atomic<bool> finished{false};
    std::atomic<std::size_t> frames_seen{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    auto record_error = [&] {
        std::lock_guard lock(error_mutex);
        if (!worker_error) worker_error = std::current_exception();
    };

    if (const auto dir = config.alert_log.parent_path(); !dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
    }
    log("monitor started on " + source.describe());

    std::thread ingest([&] {
        try {
            while (auto frame = source.next()) {
                ++frames_seen;
                video.push(std::move(*frame));
            }
        } catch (...) {
            record_error();
        }
        video.close();
    });

    std::thread infer([&] {
        std::optional<Image> previous;
        try {
            while (auto frame = video.pop()) {
                double presence = 0;
                if (previous && previous->shape() == frame->image.shape()) {
                    presence = presence_score(*previous, frame->image);
                } else if (previous) {
                    presence = 1;
                }
                const double p = std::clamp(score(frame->image), 0.0, 1.0);
                previous = frame->image;
                events.push({FrameScored{p, presence, frame->timestamp, frame->ref}, std::move(frame->image)});
            }
        } catch (...) {
            record_error();
        }
        frames_done = true;
    });

    ResponseReader responses(options.response_fd, events, finished);

    // Watch the external stop flag and pass it on to the source.
    std::thread watcher([&] {
        while (!finished) {
            if (options.stop && *options.stop) {
                source.request_stop();
                return;
            }
            std::this_thread::sleep_for(kTick);
        }
    });

    Machine machine;
    machine.entered_at = wall_now();
    std::optional<double> prompt_deadline;
    std::optional<double> reposition_deadline;
    std::vector<std::thread> reposition_threads;
    std::deque<std::pair<std::string, Image>> recent;  // evidence candidates
    std::map<std::string, std::string> evidence_files;
    const auto evidence_dir = config.alert_log.parent_path();

    auto persist_evidence = [&](const std::string& ref) {
        std::error_code ec;
        if (ref.empty() || std::filesystem::is_regular_file(ref, ec)) return;
        for (const auto& [r, img] : recent) {
            if (r != ref) continue;
            std::string name = ref;
            for (auto& c : name) {
                if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-') c = '_';
            }
            const auto path = (evidence_dir.empty() ? std::filesystem::path(".") : evidence_dir) /
                              ("evidence-" + name + ".ppm");
            try {
                data::save_p6(img, path);
                evidence_files[ref] = path.string();
            } catch (const IoError& e) {
                log(std::string("could not save evidence frame: ") + e.what());
            }
            return;
        }
    };

    auto perform = [&](const Action& action) {
        if (const auto* p = std::get_if<EmitPrompt>(&action)) {
            ++summary.prompts;
            persist_evidence(machine.evidence_ref);
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.0f", p->deadline - wall_now());
            log(std::string("PROMPT: a fall was detected. Do you need help? (yes/no, ") + buf + " s to answer)");
        } else if (const auto* t = std::get_if<ArmTimer>(&action)) {
            prompt_deadline = t->deadline;
        } else if (std::holds_alternative<CancelTimer>(action)) {
            prompt_deadline.reset();
        } else if (const auto* r = std::get_if<Reposition>(&action)) {
            ++summary.repositions;
            log("reposition: sending '" + r->command + "'");
            reposition_deadline = wall_now() + config.reposition_timeout;
            if (options.drone) {
                const auto command = r->command;
                const auto wait = std::chrono::milliseconds(static_cast<long>(config.reposition_timeout * 500));
                reposition_threads.emplace_back([&, command, wait] {
                    try {
                        const auto res = options.drone->send_command(command, wait);
                        log("reposition reply: " + std::string(tello::to_string(res.kind)) +
                            (res.response.empty() ? "" : " '" + res.response + "'"));
                    } catch (const std::exception& e) {
                        log(std::string("reposition failed: ") + e.what());
                    }
                    events.push({RepositionComplete{}, {}});
                });
            } else {
                events.push({RepositionComplete{}, {}});
            }
        } else if (const auto* d = std::get_if<DispatchAlert>(&action)) {
            AlertRecord record = d->record;
            if (auto it = evidence_files.find(record.frame_ref); it != evidence_files.end()) {
                record.frame_ref = it->second;
            }
            ++summary.alarms;
            summary.alerts.push_back(record);
            const auto report = dispatch_alert(record, config.alert_log, config.contacts);
            for (const auto& s : report.sinks) {
                log("alert -> " + s.sink + ": " + (s.delivered ? "delivered" : "FAILED") + " (" + s.detail + ")");
            }
            if (report.total_failure()) log("alert reached no contact; it is recorded in the log only");
            summary.deliveries.push_back(report);
        }
    };

    try {
        while (true) {
            const double now = wall_now();
            if (prompt_deadline && now >= *prompt_deadline) {
                prompt_deadline.reset();
                events.push({Timeout{}, {}});
            }
            if (reposition_deadline && now >= *reposition_deadline) {
                reposition_deadline.reset();
                if (machine.state == State::Repositioning) {
                    log("reposition not acknowledged in time; assuming complete");
                    events.push({RepositionComplete{}, {}});
                }
            }

            auto item = events.pop_for(kTick);
            if (!item) {
                const bool waiting = prompt_deadline.has_value() || machine.state == State::Repositioning;
                if (frames_done && events.size() == 0 && !waiting) break;
                continue;
            }

            if (auto* f = std::get_if<FrameScored>(&item->event)) {
                ++summary.frames;
                recent.emplace_back(f->frame_ref, std::move(item->image));
                if (recent.size() > config.debounce_frames + 1) recent.pop_front();
            }
            if (std::holds_alternative<RepositionComplete>(item->event)) reposition_deadline.reset();

            const auto result = step(machine, item->event, config, wall_now());
            if (result.ignored) ++summary.ignored_events;
            if (result.next.state != machine.state) {
                log(std::string(to_string(machine.state)) + " -> " + to_string(result.next.state) + " (" +
                    result.note + ")");
            } else if (result.ignored && !std::holds_alternative<FrameScored>(item->event)) {
                log(result.note);
            }
            machine = result.next;
            for (const auto& a : result.actions) perform(a);
        }
    } catch (...) {
        finished = true;
        source.request_stop();
        video.close();
        events.close();
        ingest.join();
        infer.join();
        watcher.join();
        for (auto& t : reposition_threads) t.join();
        throw;
    }

    finished = true;
    ingest.join();
    infer.join();
    watcher.join();
    for (auto& t : reposition_threads) t.join();
    events.close();

    if (worker_error) std::rethrow_exception(worker_error);

    summary.final_state = machine.state;
    summary.video_drops = video.dropped();
    summary.source_drops = source.dropped();
    log("monitor stopped: " + summary.format());
    return summary;
}

}  // namespace fallmon::sentinel
