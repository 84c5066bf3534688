#include "service.hpp"

#include "codec.hpp"

#include "gbrs/checkpoint.hpp"
#include "gbrs/dataset.hpp"
#include "gbrs/errors.hpp"

#include <httplib.h>

#include <iomanip>
#include <random>
#include <sstream>

namespace gbrs::service {

using nlohmann::json;

namespace {

std::string new_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    std::ostringstream ss;
    ss << std::hex << std::setfill('0') << std::setw(16) << rng() << std::setw(16) << rng();
    return ss.str();
}

template <class T>
T field(const json& body, const char* name) {
    if (!body.contains(name)) throw HttpError(400, std::string("missing field '") + name + "'");
    try {
        return body.at(name).get<T>();
    } catch (const json::exception&) {
        throw HttpError(400, std::string("field '") + name + "' has the wrong type");
    }
}

template <class T>
T field_or(const json& body, const char* name, T fallback) {
    return body.contains(name) ? field<T>(body, name) : fallback;
}

json click_json(const Click& c) { return {{"u", c.u}, {"v", c.v}, {"r", c.radius}, {"label", c.label}}; }

} // namespace

json encode_prediction(Task task, const Tensor& pred) {
    const std::size_t h = pred.dim(2), w = pred.dim(3), hw = h * w;
    json out{{"height", h}, {"width", w}};
    if (task == Task::interactive_seg || task == Task::semantic_seg) {
        std::vector<std::uint8_t> labels(hw, 0);
        const std::size_t c = pred.dim(1);
        for (std::size_t i = 0; i < hw; ++i) {
            if (c == 1) {
                labels[i] = pred[i] > 0.0;
                continue;
            }
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k) {
                if (pred[k * hw + i] > pred[best * hw + i]) best = k;
            }
            labels[i] = static_cast<std::uint8_t>(best);
        }
        out["format"] = "png-paletted";
        out["png"] = base64_encode(encode_png_paletted(labels, h, w, class_palette()));
    } else {
        const Quantized q = encode_png_gray16(pred.data(), h, w);
        out["format"] = "png-gray16";
        out["png"] = base64_encode(q.png);
        out["min"] = q.min;
        out["max"] = q.max;
    }
    return out;
}

json encode_report(const RefinementReport& r) {
    return {{"loss_r", r.loss_r},
            {"loss_c", r.loss_c},
            {"loss_total", r.loss_total},
            {"iterations", r.iterations},
            {"early_stopped", r.early_stopped},
            {"seconds", r.seconds},
            {"lr", r.lr},
            {"betas", {r.beta1, r.beta2}},
            {"eps", r.eps}};
}

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {}

void SessionService::set_network(Task task, std::shared_ptr<const Network> net) {
    std::lock_guard lock(mutex_);
    networks_[task] = std::move(net);
}

std::shared_ptr<const Network> SessionService::network(Task task) {
    std::lock_guard lock(mutex_);
    auto it = networks_.find(task);
    if (it != networks_.end()) return it->second;
    const auto path = options_.checkpoints / (std::string(to_string(task)) + ".ckpt");
    auto net = std::make_shared<const Network>(load_checkpoint(path.string()));
    networks_[task] = net;
    return net;
}

std::size_t SessionService::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

void SessionService::expire() {
    const auto now = std::chrono::steady_clock::now();
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        Entry& e = *it->second;
        std::unique_lock elock(e.m, std::try_to_lock);
        const bool idle = elock.owns_lock() && e.serving == e.next_ticket;
        if (idle && now - e.last_used > options_.ttl) {
            e.removed = true;
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
    expire();
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
    return it->second;
}

// Runs f(entry) once every earlier request on the same session has finished.
template <class F>
auto SessionService::serialized(const std::string& id, F&& f) {
    auto e = find(id);
    std::unique_lock lock(e->m);
    const std::uint64_t ticket = e->next_ticket++;
    e->cv.wait(lock, [&] { return e->serving == ticket; });
    struct Done {
        Entry& e;
        std::unique_lock<std::mutex>& lock;
        ~Done() {
            if (!lock.owns_lock()) lock.lock();
            e.last_used = std::chrono::steady_clock::now();
            ++e.serving;
            e.cv.notify_all();
        }
    } done{*e, lock};
    if (e->removed) throw HttpError(404, "unknown session '" + id + "'");
    lock.unlock();
    return f(*e);
}

json SessionService::create(const json& body) {
    expire();
    if (!body.is_object()) throw HttpError(400, "body must be a JSON object");
    const Task task = parse_task(field<std::string>(body, "task"));
    SessionOptions o;
    o.mode = parse_mode(field_or<std::string>(body, "mode", "gbrs"));
    o.kind = parse_gbrs_kind(field_or<std::string>(body, "kind", "bmconv"));
    o.layers = field_or<std::size_t>(body, "layers", 1);
    if (body.contains("config")) {
        const json& c = body.at("config");
        o.config.lr = field_or<double>(c, "lr", o.config.lr);
        o.config.iterations = field_or<std::size_t>(c, "iterations", o.config.iterations);
        o.config.lambda_c = field_or<double>(c, "lambda_c", o.config.lambda_c);
        o.config.use_consistency = field_or<bool>(c, "consistency", o.config.use_consistency);
        o.tcs_k = field_or<int>(c, "tcs_k", o.tcs_k);
    }

    Tensor image, trimap;
    if (body.contains("sample")) {
        const json& s = body.at("sample");
        const Sample sample = generate_sample(field_or<std::size_t>(s, "size", 64), field_or<std::uint64_t>(s, "seed", 0),
                                              field_or<std::size_t>(s, "index", 0),
                                              field_or<std::string>(s, "style", "standard") == "shifted"
                                                  ? DatasetStyle::shifted
                                                  : DatasetStyle::standard);
        image = sample.image;
        trimap = sample.trimap;
    } else {
        image = decode_image(base64_decode(field<std::string>(body, "image")));
    }
    if (body.contains("trimap")) {
        trimap = decode_gray(base64_decode(field<std::string>(body, "trimap")));
        // Snap to the three trimap levels.
        for (auto& v : trimap.data()) v = v < 0.25 ? 0.0 : v > 0.75 ? 1.0 : 0.5;
        if (trimap.dim(0) != image.dim(1) || trimap.dim(1) != image.dim(2)) {
            throw HttpError(400, "trimap size does not match the image");
        }
    }

    auto net = network(task);
    auto entry = std::make_shared<Entry>();
    entry->id = new_id();
    entry->task = task;
    entry->created = std::chrono::system_clock::now();
    entry->last_used = std::chrono::steady_clock::now();
    entry->session = std::make_unique<Session>(
        Session::create(net, task, image, trimap.empty() ? nullptr : &trimap, o));
    json out{{"session_id", entry->id}, {"task", to_string(task)},
             {"prediction", encode_prediction(task, entry->session->prediction())}};
    std::lock_guard lock(mutex_);
    sessions_[entry->id] = entry;
    return out;
}

json SessionService::click(const std::string& id, const json& body) {
    const Click c{field<int>(body, "u"), field<int>(body, "v"), field_or<double>(body, "r", 5.0),
                  field<double>(body, "label")};
    return serialized(id, [&](Entry& e) {
        const json report = encode_report(e.session->add_click(c));
        e.reports.push_back({{"action", "click"}, {"report", report}});
        return json{{"prediction", encode_prediction(e.task, e.session->prediction())}, {"report", report}};
    });
}

json SessionService::stroke(const std::string& id, const json& body) {
    const json points = field<json>(body, "points");
    if (!points.is_array() || points.empty()) throw HttpError(400, "'points' must be a nonempty array");
    std::vector<StrokePoint> stroke;
    for (const auto& p : points) {
        stroke.push_back(StrokePoint{field<int>(p, "u"), field<int>(p, "v"), field_or<double>(p, "r", 5.0),
                                     field<int>(p, "class")});
    }
    return serialized(id, [&](Entry& e) {
        const json report = encode_report(e.session->apply_stroke(stroke));
        e.reports.push_back({{"action", "stroke"}, {"report", report}});
        return json{{"prediction", encode_prediction(e.task, e.session->prediction())}, {"report", report}};
    });
}

json SessionService::push(const std::string& id, const json& body) {
    const std::string dir = field<std::string>(body, "direction");
    if (dir != "up" && dir != "down") throw HttpError(400, "direction must be 'up' or 'down'");
    const Click c{field<int>(body, "u"), field<int>(body, "v"), field_or<double>(body, "r", 5.0), 0.0};
    return serialized(id, [&](Entry& e) {
        const json report =
            encode_report(e.session->push(c, dir == "up" ? PushDirection::up : PushDirection::down));
        e.reports.push_back({{"action", "push-" + dir}, {"report", report}});
        return json{{"prediction", encode_prediction(e.task, e.session->prediction())}, {"report", report}};
    });
}

json SessionService::undo(const std::string& id) {
    return serialized(id, [&](Entry& e) {
        e.session->undo();
        if (!e.reports.empty()) e.reports.pop_back();
        return json{{"prediction", encode_prediction(e.task, e.session->prediction())}};
    });
}

json SessionService::describe(const std::string& id) {
    return serialized(id, [&](Entry& e) {
        json clicks = json::array();
        for (const auto& c : e.session->clicks()) clicks.push_back(click_json(c));
        const SessionOptions& o = e.session->options();
        json metrics = json::array();
        for (const auto& r : e.reports) {
            metrics.push_back({{"action", r["action"]},
                               {"iterations", r["report"]["iterations"]},
                               {"early_stopped", r["report"]["early_stopped"]},
                               {"final_loss", r["report"]["loss_total"].back()},
                               {"seconds", r["report"]["seconds"]}});
        }
        return json{{"session_id", e.id},
                    {"task", to_string(e.task)},
                    {"created_at", std::chrono::duration_cast<std::chrono::seconds>(e.created.time_since_epoch()).count()},
                    {"clicks", clicks},
                    {"config",
                     {{"mode", to_string(o.mode)},
                      {"kind", to_string(o.kind)},
                      {"layers", o.layers},
                      {"tcs_k", o.tcs_k},
                      {"iterations", o.config.iterations},
                      {"lr", o.config.lr},
                      {"lambda_c", o.config.lambda_c},
                      {"consistency", o.config.use_consistency}}},
                    {"metrics", metrics}};
    });
}

std::string SessionService::snapshot(const std::string& id) {
    return serialized(id, [&](Entry& e) { return e.session->snapshot(); });
}

void SessionService::remove(const std::string& id) {
    serialized(id, [&](Entry& e) {
        std::lock_guard lock(mutex_);
        e.removed = true;
        sessions_.erase(e.id);
        return 0;
    });
}

void SessionService::mount(httplib::Server& server) {
    using httplib::Request;
    using httplib::Response;
    auto guarded = [](auto&& handler) {
        return [handler](const Request& req, Response& res) {
            int status = 200;
            json out;
            try {
                handler(req, res, out);
            } catch (const HttpError& e) {
                status = e.status;
                out = {{"error", e.what()}};
            } catch (const json::exception& e) {
                status = 400;
                out = {{"error", std::string("malformed JSON: ") + e.what()}};
            } catch (const InputError& e) {
                status = 400;
                out = {{"error", e.what()}};
            } catch (const DimensionError& e) {
                status = 400;
                out = {{"error", e.what()}};
            } catch (const ContractError& e) {
                status = 400;
                out = {{"error", e.what()}};
            } catch (const ModeError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const LoadError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const std::exception& e) {
                status = 500;
                out = {{"error", e.what()}};
            }
            if (res.body.empty() || status != 200) {
                res.status = status;
                res.set_content(out.dump(), "application/json");
            }
        };
    };
    auto body_of = [](const Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };

    server.Post("/sessions", guarded([this, body_of](const Request& req, Response&, json& out) {
                    out = create(body_of(req));
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/click)", guarded([this, body_of](const Request& req, Response&, json& out) {
                    out = click(req.matches[1], body_of(req));
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/stroke)", guarded([this, body_of](const Request& req, Response&, json& out) {
                    out = stroke(req.matches[1], body_of(req));
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/push)", guarded([this, body_of](const Request& req, Response&, json& out) {
                    out = push(req.matches[1], body_of(req));
                }));
    server.Post(R"(/sessions/([0-9a-f]+)/undo)", guarded([this](const Request& req, Response&, json& out) {
                    out = undo(req.matches[1]);
                }));
    server.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const Request& req, Response&, json& out) {
                   out = describe(req.matches[1]);
               }));
    server.Get(R"(/sessions/([0-9a-f]+)/snapshot)", guarded([this](const Request& req, Response& res, json&) {
                   res.set_content(snapshot(req.matches[1]), "application/octet-stream");
               }));
    server.Delete(R"(/sessions/([0-9a-f]+))", guarded([this](const Request& req, Response&, json& out) {
                      remove(req.matches[1]);
                      out = {{"deleted", true}};
                  }));
    server.set_logger([](const Request&, const Response&) {});
}

} // namespace gbrs::service
