#include "couplegen/prompt_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace couplegen {

namespace {

std::string trim(const std::string& s)
{
    auto begin = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto end = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); })
                   .base();
    return begin < end ? std::string(begin, end) : std::string();
}

std::vector<std::string> split_whitespace(const std::string& text)
{
    std::istringstream is(text);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) {
        out.push_back(tok);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url)
{
    static const std::regex pattern(R"(^(https?://[^/\s]+)(/\S*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) {
        throw DomainError("LLM endpoint URL is not well-formed: '" + url + "'");
    }
    std::string path = m[2].matched ? m[2].str() : std::string();
    if (path.empty() || path == "/") {
        path = "/v1/chat/completions";
    }
    return {m[1].str(), path};
}

PromptBundle parse_for(const std::vector<std::string>& prompts, const std::string& reply)
{
    PromptBundle bundle = parse_decomposition(reply);
    if (!prompts.empty() && bundle.entities.size() != prompts.size()) {
        throw ParseError("decomposition returned " + std::to_string(bundle.entities.size()) +
                             " entities for " + std::to_string(prompts.size()) + " prompts",
                         reply);
    }
    return bundle;
}

std::string post_with_retries(const LlmEndpoint& ep, const nlohmann::json& payload)
{
    const SplitUrl target = split_url(ep.url);
    const int attempts = std::max(1, ep.max_attempts);
    std::string last_error;
    auto backoff = ep.initial_backoff;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(target.origin);
        client.set_connection_timeout(ep.timeout);
        client.set_read_timeout(ep.timeout);
        client.set_write_timeout(ep.timeout);
        httplib::Headers headers;
        if (!ep.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + ep.api_key);
        }
        auto res = client.Post(target.path, headers, payload.dump(), "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            return res->body;
        }
        last_error = res ? "HTTP status " + std::to_string(res->status)
                         : "transport failure: " + httplib::to_string(res.error());
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError("LLM request to " + ep.url + " failed after " + std::to_string(attempts) +
                             " attempts: " + last_error,
                         attempts);
}

} // namespace

void PromptBundle::check() const
{
    if (trim(background).empty()) {
        throw DomainError("prompt bundle: background must not be empty");
    }
    if (entities.empty()) {
        throw DomainError("prompt bundle: at least one entity is required");
    }
}

nlohmann::json PromptBundle::to_json() const
{
    return {{"background", background}, {"entities", entities}};
}

PromptBundle PromptBundle::from_json(const nlohmann::json& j)
{
    PromptBundle b;
    b.background = j.at("background").get<std::string>();
    b.entities = j.at("entities").get<std::vector<std::string>>();
    b.check();
    return b;
}

PromptBundle read_bundle(const std::filesystem::path& path)
{
    try {
        return PromptBundle::from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": invalid bundle JSON: " + e.what());
    }
}

void write_bundle(const std::filesystem::path& path, const PromptBundle& bundle)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write bundle " + path.string());
    }
    os << bundle.to_json().dump(2) << '\n';
}

std::vector<std::string> read_prompt_lines(const std::filesystem::path& path)
{
    std::istringstream is(read_text_file(path));
    std::vector<std::string> prompts;
    for (std::string line; std::getline(is, line);) {
        if (auto t = trim(line); !t.empty()) {
            prompts.push_back(std::move(t));
        }
    }
    return prompts;
}

ParseError::ParseError(const std::string& what, std::string raw_reply)
    : std::runtime_error(what), raw_reply(std::move(raw_reply))
{
}

TransportError::TransportError(const std::string& what, int attempts)
    : std::runtime_error(what), attempts(attempts)
{
}

LlmEndpoint LlmEndpoint::from_env()
{
    LlmEndpoint ep;
    const char* url = std::getenv("COUPLEGEN_LLM_URL");
    if (!url || !*url) {
        throw DomainError("COUPLEGEN_LLM_URL is not set");
    }
    ep.url = url;
    if (const char* key = std::getenv("COUPLEGEN_LLM_KEY")) {
        ep.api_key = key;
    }
    if (const char* model = std::getenv("COUPLEGEN_LLM_MODEL")) {
        ep.model = model;
    }
    split_url(ep.url);
    return ep;
}

nlohmann::json build_decomposition_request(const std::vector<std::string>& prompts,
                                           const std::string& model)
{
    if (prompts.size() < 2) {
        throw DomainError("decomposition needs at least two prompts, got " +
                          std::to_string(prompts.size()));
    }
    std::string numbered;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (i > 0) {
            numbered += '\n';
        }
        numbered += "Prompt " + std::to_string(i + 1) + ": " + trim(prompts[i]);
    }
    return {{"model", model},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", kDecompositionSystemMessage}},
                                    {{"role", "user"}, {"content", kDecompositionInstruction}},
                                    {{"role", "user"}, {"content", numbered}}})}};
}

PromptBundle parse_decomposition(const std::string& reply)
{
    static const std::regex background_line(R"(^\s*Background\s*:(.*)$)");
    static const std::regex entity_line(R"(^\s*Entity\s+(\d+)\s*:(.*)$)");

    std::optional<std::string> background;
    std::map<std::size_t, std::string> entities;
    std::istringstream is(reply);
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::smatch m;
        if (std::regex_match(line, m, background_line)) {
            if (background) {
                throw ParseError("decomposition reply has more than one Background line", reply);
            }
            background = trim(m[1].str());
        } else if (std::regex_match(line, m, entity_line)) {
            const auto index = static_cast<std::size_t>(std::stoul(m[1].str()));
            if (!entities.emplace(index, trim(m[2].str())).second) {
                throw ParseError("decomposition reply repeats Entity " + m[1].str(), reply);
            }
        }
    }
    if (!background || background->empty()) {
        throw ParseError("decomposition reply has no non-empty Background line", reply);
    }
    if (entities.empty()) {
        throw ParseError("decomposition reply has no Entity lines", reply);
    }
    PromptBundle bundle;
    bundle.background = *background;
    std::size_t expected = 1;
    for (auto& [index, text] : entities) {
        if (index != expected) {
            throw ParseError("decomposition reply is missing Entity " + std::to_string(expected),
                             reply);
        }
        if (text.empty()) {
            throw ParseError("decomposition reply has an empty Entity " + std::to_string(index),
                             reply);
        }
        bundle.entities.push_back(std::move(text));
        ++expected;
    }
    return bundle;
}

std::string extract_reply_content(const std::string& response_body)
{
    try {
        const auto j = nlohmann::json::parse(response_body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed chat-completion response: ") + e.what(),
                         response_body);
    }
}

PromptBundle decompose(const std::vector<std::string>& prompts, const DecompositionSource& source)
{
    if (const auto* fixture = std::get_if<FixturePath>(&source)) {
        return parse_for(prompts, read_text_file(fixture->path));
    }
    const auto& ep = std::get<LlmEndpoint>(source);
    const auto payload = build_decomposition_request(prompts, ep.model);
    return parse_for(prompts, extract_reply_content(post_with_retries(ep, payload)));
}

TokenSeq embed_prompt(const std::string& text, std::size_t d_model, std::size_t n_tokens,
                      std::uint64_t seed)
{
    if (d_model == 0 || n_tokens == 0) {
        throw DomainError("embed_prompt: d_model and n_tokens must be >= 1");
    }
    const std::vector<std::string> tokens = split_whitespace(text);
    const std::uint64_t seed_mix = mix64(seed);
    TokenSeq out(n_tokens, d_model);
    for (std::size_t p = 0; p < n_tokens; ++p) {
        const std::string_view token = p < tokens.size() ? std::string_view(tokens[p]) : "<pad>";
        Rng rng(mix64(fnv1a64(token) ^ seed_mix));
        auto row = out.row(p);
        for (double& v : row) {
            v = rng.uniform(-1.0, 1.0);
        }
        row[0] += static_cast<double>(p) / static_cast<double>(n_tokens);
    }
    return out;
}

} // namespace couplegen
