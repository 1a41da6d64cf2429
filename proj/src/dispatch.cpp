#include <fstream>

#include <httplib.h>

#include "fallmon/errors.hpp"
#include "fallmon/sentinel.hpp"

namespace fallmon::sentinel {

namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

std::optional<Url> split_url(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) return std::nullopt;
    const auto slash = url.find('/', scheme.size());
    Url u;
    u.origin = url.substr(0, slash);
    u.path = slash == std::string::npos ? "/" : url.substr(slash);
    if (u.origin.size() == scheme.size()) return std::nullopt;
    return u;
}

SinkResult post(const std::string& url, const std::string& body, std::chrono::milliseconds timeout) {
    SinkResult r{url, false, 0, {}};
    const auto parts = split_url(url);
    if (!parts) {
        r.detail = "unsupported webhook URL (http:// only)";
        return r;
    }
    httplib::Client client(parts->origin);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    for (int attempt = 1; attempt <= 2; ++attempt) {
        r.attempts = attempt;
        auto res = client.Post(parts->path, body, "application/json");
        if (!res) {
            r.detail = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            r.delivered = true;
            r.detail = "HTTP " + std::to_string(res->status);
            return r;
        }
        r.detail = "HTTP " + std::to_string(res->status);
    }
    return r;
}

}  // namespace

bool DeliveryReport::total_failure() const {
    if (sinks.size() <= 1) return false;
    return std::none_of(sinks.begin() + 1, sinks.end(), [](const SinkResult& s) { return s.delivered; });
}

DeliveryReport dispatch_alert(const AlertRecord& record, const std::filesystem::path& log_path,
                              const std::vector<std::string>& webhooks, std::chrono::milliseconds timeout) {
    const std::string line = to_json_line(record);
    DeliveryReport report;
    {
        std::ofstream log(log_path, std::ios::binary | std::ios::app);
        if (log) log << line << '\n' << std::flush;
        if (!log) throw IoError("cannot append alert to " + log_path.string());
        report.sinks.push_back({log_path.string(), true, 1, "appended"});
    }
    for (const auto& url : webhooks) report.sinks.push_back(post(url, line, timeout));
    return report;
}

}  // namespace fallmon::sentinel
