#pragma once

#include "gbrs/network.hpp"
#include "gbrs/session.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace gbrs::service {

/// Error carrying the HTTP status it should surface as.
struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

/// JSON encoding of a prediction: paletted PNG for masks and class maps,
/// 16-bit PNG plus min/max for alpha and depth.
nlohmann::json encode_prediction(Task task, const Tensor& pred);
nlohmann::json encode_report(const RefinementReport& report);

struct ServiceOptions {
    std::filesystem::path checkpoints = "checkpoints"; // holds <task>.ckpt
    std::chrono::seconds ttl{30 * 60};                 // idle sessions are dropped after this
};

/// In-memory session registry behind the HTTP API. Requests for one session
/// run strictly in arrival order (a ticket queue); different sessions run
/// concurrently.
class SessionService {
  public:
    explicit SessionService(ServiceOptions options);

    /// Overrides checkpoint loading for a task.
    void set_network(Task task, std::shared_ptr<const Network> net);

    nlohmann::json create(const nlohmann::json& body);
    nlohmann::json click(const std::string& id, const nlohmann::json& body);
    nlohmann::json stroke(const std::string& id, const nlohmann::json& body);
    nlohmann::json push(const std::string& id, const nlohmann::json& body);
    nlohmann::json undo(const std::string& id);
    nlohmann::json describe(const std::string& id);
    std::string snapshot(const std::string& id);
    void remove(const std::string& id);

    std::size_t size() const;

    /// Registers the routes on `server`.
    void mount(httplib::Server& server);

  private:
    struct Entry {
        std::string id;
        Task task = Task::interactive_seg;
        std::chrono::system_clock::time_point created;
        std::chrono::steady_clock::time_point last_used;
        std::unique_ptr<Session> session;
        std::vector<nlohmann::json> reports; // one per interaction, popped by undo
        std::mutex m;
        std::condition_variable cv;
        std::uint64_t next_ticket = 0;
        std::uint64_t serving = 0;
        bool removed = false;
    };

    std::shared_ptr<const Network> network(Task task);
    std::shared_ptr<Entry> find(const std::string& id);
    void expire();
    template <class F>
    auto serialized(const std::string& id, F&& f);

    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::map<Task, std::shared_ptr<const Network>> networks_;
};

} // namespace gbrs::service
