#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "stgia/predictor.hpp"

namespace stgia {

enum class PredictorKind { markov, remote };

/// Configuration of the candidate predictor. The remote settings mirror the
/// LLM-Mob defaults: temperature 0, 40 historical and 5 contextual stays.
/// Endpoint and credential come from STGIA_PREDICTOR_URL /
/// STGIA_PREDICTOR_TOKEN unless set explicitly.
struct PredictorBinding {
    PredictorKind kind = PredictorKind::markov;
    std::string endpoint;      // e.g. http://host:port/predict
    std::string auth_token;
    double temperature = 0.0;
    int history_len = kHistoryStays;
    int context_len = kContextStays;
    bool fallback_to_markov = true;
    /// Receives one line per degradation event (retries, fallbacks).
    std::function<void(const std::string&)> log;
};

inline PredictorBinding binding_from_env(PredictorKind kind) {
    PredictorBinding b;
    b.kind = kind;
    if (const char* url = std::getenv("STGIA_PREDICTOR_URL")) b.endpoint = url;
    if (const char* tok = std::getenv("STGIA_PREDICTOR_TOKEN")) b.auth_token = tok;
    return b;
}

namespace detail {

inline void log_event(const PredictorBinding& b, const std::string& msg) {
    if (b.log) b.log(msg);
}

/// One POST of {"prompt": ..., "temperature": 0} returning the reply text, or
/// nullopt on transport / protocol failure.
inline std::optional<std::string> remote_reply_once(const PredictorBinding& b,
                                                    const std::string& prompt) {
    const std::size_t scheme = b.endpoint.find("://");
    if (scheme == std::string::npos) return std::nullopt;
    const std::size_t path_at = b.endpoint.find('/', scheme + 3);
    const std::string host = b.endpoint.substr(0, path_at);
    const std::string path = path_at == std::string::npos ? "/" : b.endpoint.substr(path_at);

    httplib::Client cli(host);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(10, 0);
    httplib::Headers headers;
    if (!b.auth_token.empty()) headers.emplace("Authorization", "Bearer " + b.auth_token);

    nlohmann::json body = {{"prompt", prompt}, {"temperature", b.temperature}};
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    try {
        const nlohmann::json j = nlohmann::json::parse(res->body);
        if (j.contains("reply")) return j.at("reply").get<std::string>();
        return res->body;  // accept a bare text body too
    } catch (const std::exception&) {
        return res->body;
    }
}

}  // namespace detail

/// Produces candidates from the configured predictor. The remote path builds
/// the prompt, POSTs it, and parses the ranked cell list; one retry, then the
/// markov fallback (when enabled) or a PredictorUnavailable error. Cells
/// outside the grid are dropped.
inline CandidateSet predict_candidates(const PredictorBinding& binding, const MarkovTable& table,
                                       const std::vector<Stay>& history, const GridIndex& grid) {
    auto markov = [&] {
        std::vector<CellId> cells;
        cells.reserve(history.size());
        for (const Stay& s : history) cells.push_back(s.cell);
        return markov_candidates(cells, table, grid);
    };
    if (binding.kind == PredictorKind::markov) return markov();

    if (history.empty())
        throw std::invalid_argument("predict_candidates: remote predictor needs history");
    const std::string prompt = build_prompt(history, binding.history_len, binding.context_len);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = detail::remote_reply_once(binding, prompt);
        if (!reply) {
            detail::log_event(binding, "remote predictor transport failure (attempt " +
                                           std::to_string(attempt + 1) + ")");
            continue;
        }
        try {
            const std::vector<CellId> cells = parse_candidate_reply(*reply);
            CandidateSet set;
            for (CellId c : cells) {
                if (c < 0 || c >= grid.cell_count()) continue;
                set.push_back(Candidate{static_cast<int>(set.size()) + 1, c,
                                        grid_cell_center(c, grid)});
            }
            if (!set.empty()) return set;
            detail::log_event(binding, "remote predictor returned no usable cells");
        } catch (const std::exception& e) {
            detail::log_event(binding, std::string("remote predictor parse failure: ") + e.what());
        }
    }
    if (binding.fallback_to_markov) {
        detail::log_event(binding, "falling back to markov predictor");
        return markov();
    }
    throw PredictorUnavailable("remote predictor unavailable after retry");
}

/// Wraps a binding as a CandidateProvider for the attack driver.
inline CandidateProvider make_provider(PredictorBinding binding, const MarkovTable& table,
                                       const GridIndex& grid) {
    return [binding, &table, &grid](const std::string&, std::size_t,
                                    const std::vector<Stay>& history) {
        return predict_candidates(binding, table, history, grid);
    };
}

}  // namespace stgia
