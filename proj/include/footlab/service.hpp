#pragma once

// HTTP/1.1 JSON API over the annotation store.
//
//   GET  /api/matches
//   POST /api/matches                          match document
//   GET  /api/matches/{id}
//   POST /api/matches/{id}/annotations         episode file body; ?clock=period|match
//   POST /api/matches/{id}/sensor-data         {"devices": [{<device config>, "data": "<file>"}]}
//   POST /api/matches/{id}/detect              {"thresholds": {...}}
//   GET  /api/matches/{id}/warnings?state=
//   GET  /api/matches/{id}/events?player=&period=
//   GET  /api/rules
//   POST /api/warnings/{id}/resolution         {"action": "fix"|"dismiss", "corrected_description"?, "episode_id"?}
//
// Errors: 400 malformed body, 404 unknown id, 409 double resolution,
// 422 domain validation with {"error", "fields": [...]}. A static review
// bundle is served under /ui/ when a directory is configured.

#include <filesystem>
#include <optional>
#include <string>

#include "footlab/codec.hpp"
#include "footlab/pipeline.hpp"
#include "footlab/store.hpp"
#include "httplib.h"

namespace footlab {

struct ServiceOptions {
    std::optional<ForestModel> model;
    WindowConfig window;
    MiningConfig mining;
    std::optional<std::filesystem::path> ui_dir;
};

class Service {
public:
    Service(AnnotationStore& store, ServiceOptions options) : store_(store), opt_(std::move(options)) { routes(); }

    httplib::Server& server() { return http_; }

    /// Blocks until stop(). Returns false if the address cannot be bound.
    bool listen(const std::string& host, int port) { return http_.listen(host, port); }

    /// Binds an ephemeral port for listen_after_bind(); returns it, or -1.
    int bind_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
    bool listen_after_bind() { return http_.listen_after_bind(); }
    void stop() { http_.stop(); }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send(Res& res, int status, const OrderedJson& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(Res& res, int status, const std::string& message,
                           const std::vector<ValidationError::Field>& fields = {}) {
        OrderedJson j;
        j["error"] = message;
        if (status == 422) {
            j["fields"] = OrderedJson::array();
            for (const auto& f : fields) j["fields"].push_back(f.name);
        }
        send(res, status, j);
    }

    /// Maps domain exceptions onto status codes.
    template <class F>
    static httplib::Server::Handler guarded(F body) {
        return [body](const Req& req, Res& res) {
            try {
                body(req, res);
            } catch (const ValidationError& e) {
                send_error(res, 422, e.what(), e.fields());
            } catch (const NotFoundError& e) {
                send_error(res, 404, e.what());
            } catch (const ConflictError& e) {
                send_error(res, 409, e.what());
            } catch (const FormatError& e) {
                send_error(res, 400, e.what());
            } catch (const Json::exception& e) {
                send_error(res, 400, e.what());
            } catch (const ArgumentError& e) {
                send_error(res, 422, e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        };
    }

    static Json body_json(const Req& req) {
        if (text::trim(req.body).empty()) return Json::object();
        auto j = parse_json(req.body, "body");
        if (!j.is_object()) throw FormatError("body: expected a JSON object");
        return j;
    }

    static std::int64_t path_id(const Req& req, const char* what) {
        const auto v = text::parse_int(req.matches[1].str());
        if (!v) throw NotFoundError(std::string(what) + " " + req.matches[1].str() + " not found");
        return *v;
    }

    static OrderedJson warnings_json(const std::vector<Warning>& ws) {
        auto arr = OrderedJson::array();
        for (const auto& w : ws) arr.push_back(warning_to_json(w));
        return arr;
    }

    void routes() {
        http_.Get("/api/matches", guarded([this](const Req&, Res& res) {
            auto arr = OrderedJson::array();
            for (const auto& m : store_.list_matches()) arr.push_back(match_to_json(m));
            send(res, 200, arr);
        }));

        http_.Post("/api/matches", guarded([this](const Req& req, Res& res) {
            const auto m = match_from_json(body_json(req));
            store_.upsert_match(m);
            send(res, 201, match_to_json(store_.get_match(m.match_id)));
        }));

        http_.Get(R"(/api/matches/([^/]+))", guarded([this](const Req& req, Res& res) {
            send(res, 200, match_to_json(store_.get_match(req.matches[1].str())));
        }));

        http_.Post(R"(/api/matches/([^/]+)/annotations)", guarded([this](const Req& req, Res& res) {
            const auto id = req.matches[1].str();
            const auto match = store_.get_match(id);
            EpisodeClock clock = EpisodeClock::period;
            if (req.has_param("clock")) {
                const auto c = req.get_param_value("clock");
                if (c != "period" && c != "match") throw ValidationError("clock", "must be period or match");
                clock = parse_episode_clock(c);
            }
            auto episodes = parse_episode_file(req.body);
            std::vector<ValidationError::Field> bad;
            for (std::size_t i = 0; i < episodes.size(); ++i)
                if (episodes[i].match_id != id)
                    bad.push_back({"episodes[" + std::to_string(i) + "].Match", "expected " + id});
            throw_if_any(bad);
            store_.put_episodes(to_period_relative(std::move(episodes), match, clock));
            auto arr = OrderedJson::array();
            for (const auto& e : store_.episodes(id)) arr.push_back(episode_to_json(e));
            send(res, 200, arr);
        }));

        http_.Post(R"(/api/matches/([^/]+)/sensor-data)", guarded([this](const Req& req, Res& res) {
            const auto id = req.matches[1].str();
            const auto match = store_.get_match(id);
            const auto body = body_json(req);
            std::vector<ValidationError::Field> errors;
            FieldReader r(body, "", errors);
            r.reject_unknown({"devices"});
            std::vector<DeviceUpload> uploads;
            const auto& devices = r.array("devices");
            if (devices.empty()) r.fail("devices", "at least one device required");
            for (std::size_t i = 0; i < devices.size(); ++i) {
                auto d = r.nested(devices[i], "devices[" + std::to_string(i) + "]");
                DeviceUpload u;
                u.data = d.required<std::string>("data").value_or("");
                u.config = read_device_config(d);
                uploads.push_back(std::move(u));
            }
            if (!opt_.model) errors.push_back({"model", "no model is loaded"});
            throw_if_any(errors);
            const auto batch = synchronize_devices(uploads, match);
            const auto labels =
                store_.aggregate_labels(id, predict_all(*opt_.model, sensor_features(batch.readings, opt_.window)));
            auto arr = OrderedJson::array();
            for (const auto& l : labels) arr.push_back(label_to_json(l));
            send(res, 200, arr);
        }));

        http_.Post(R"(/api/matches/([^/]+)/detect)", guarded([this](const Req& req, Res& res) {
            const auto id = req.matches[1].str();
            if (!store_.has_match(id)) throw NotFoundError("match " + id + " not found");
            const auto body = body_json(req);
            std::vector<ValidationError::Field> errors;
            FieldReader r(body, "", errors);
            r.reject_unknown({"thresholds"});
            const auto t = read_thresholds(r.child("thresholds"));
            throw_if_any(errors);
            send(res, 200, warnings_json(detect_match(store_, id, store_.rules(), opt_.mining, t)));
        }));

        http_.Get(R"(/api/matches/([^/]+)/warnings)", guarded([this](const Req& req, Res& res) {
            std::optional<WarningState> state;
            if (req.has_param("state")) {
                try {
                    state = parse_warning_state(req.get_param_value("state"));
                } catch (const ArgumentError&) {
                    throw ValidationError("state", "must be open, fixed or dismissed");
                }
            }
            send(res, 200, warnings_json(store_.warnings(req.matches[1].str(), state)));
        }));

        http_.Get(R"(/api/matches/([^/]+)/events)", guarded([this](const Req& req, Res& res) {
            std::optional<int> period;
            std::optional<std::string> player;
            if (req.has_param("period")) {
                const auto p = text::parse_int(req.get_param_value("period"));
                if (!p || *p < 1) throw ValidationError("period", "must be a positive integer");
                period = static_cast<int>(*p);
            }
            if (req.has_param("player")) player = req.get_param_value("player");
            auto arr = OrderedJson::array();
            for (const auto& e : store_.query_events(req.matches[1].str(), period, player)) arr.push_back(event_to_json(e));
            send(res, 200, arr);
        }));

        http_.Get("/api/rules", guarded([this](const Req&, Res& res) {
            auto arr = OrderedJson::array();
            for (const auto& r : store_.rules()) arr.push_back(rule_to_json(r));
            send(res, 200, arr);
        }));

        http_.Post(R"(/api/warnings/([^/]+)/resolution)", guarded([this](const Req& req, Res& res) {
            const auto id = path_id(req, "warning");
            const auto body = body_json(req);
            std::vector<ValidationError::Field> errors;
            FieldReader r(body, "", errors);
            r.reject_unknown({"action", "corrected_description", "episode_id"});
            Resolution resolution;
            const auto action = r.required<std::string>("action");
            if (action == "fix")
                resolution.action = WarningState::fixed;
            else if (action == "dismiss")
                resolution.action = WarningState::dismissed;
            else if (action)
                r.fail("action", "must be fix or dismiss");
            resolution.corrected_description = r.get<std::string>("corrected_description");
            resolution.episode_id = r.get<std::int64_t>("episode_id");
            if (action == "fix" && (!resolution.corrected_description || text::trim(*resolution.corrected_description).empty()))
                r.fail("corrected_description", "required for a fix");
            throw_if_any(errors);
            send(res, 200, warning_to_json(store_.resolve_warning(id, resolution)));
        }));

        if (opt_.ui_dir) http_.set_mount_point("/ui", opt_.ui_dir->string());
    }

    AnnotationStore& store_;
    ServiceOptions opt_;
    httplib::Server http_;
};

}  // namespace footlab
