#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "couplegen/numerics.hpp"

namespace couplegen {

/// One shared background prompt plus one entity prompt per input prompt.
struct PromptBundle {
    std::string background;
    std::vector<std::string> entities;

    void check() const;
    nlohmann::json to_json() const;
    static PromptBundle from_json(const nlohmann::json& j);

    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

PromptBundle read_bundle(const std::filesystem::path& path);
void write_bundle(const std::filesystem::path& path, const PromptBundle& bundle);

/// Reads one prompt per non-empty line.
std::vector<std::string> read_prompt_lines(const std::filesystem::path& path);

/// The LLM reply could not be turned into a bundle.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::string raw_reply);

    std::string raw_reply;
};

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, int attempts);

    int attempts;
};

/// Chat-completion endpoint. `url` is the full POST target; a URL with no path
/// gets `/v1/chat/completions`.
struct LlmEndpoint {
    std::string url;
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};

    /// COUPLEGEN_LLM_URL (required), COUPLEGEN_LLM_KEY, COUPLEGEN_LLM_MODEL.
    static LlmEndpoint from_env();
};

struct FixturePath {
    std::filesystem::path path;
};

using DecompositionSource = std::variant<LlmEndpoint, FixturePath>;

inline constexpr const char* kDecompositionSystemMessage =
    "You are a helpful assistant to arrange prompts for text-to-image generation.";

inline constexpr const char* kDecompositionInstruction =
    "You are given a set of prompts for text-to-image generation. Your task is to first identify "
    "and extract the common background shared across all prompts. Then, for each individual "
    "prompt, present the distinct entity description. Please format your output as follows:\n"
    "Background: [shared background]\n"
    "Entity 1: [description of the first unique entity]\n"
    "Entity 2: [description of the second unique entity]\n"
    "... and so on.";

/// `{"model", "messages": [system, instruction, numbered prompts]}`.
nlohmann::json build_decomposition_request(const std::vector<std::string>& prompts,
                                           const std::string& model = "");

/// Extracts `Background:` and `Entity k:` lines. Entities are ordered by k,
/// which must run 1..n without gaps or repeats.
PromptBundle parse_decomposition(const std::string& reply);

/// Reads `choices[0].message.content` from a chat-completion response body.
std::string extract_reply_content(const std::string& response_body);

PromptBundle decompose(const std::vector<std::string>& prompts, const DecompositionSource& source);

/// Deterministic toy text encoder: one row per whitespace token (padded or
/// truncated to n_tokens), each row seeded from the token hash and `seed`,
/// values in [-1, 1], plus position / n_tokens added to channel 0.
TokenSeq embed_prompt(const std::string& text, std::size_t d_model, std::size_t n_tokens,
                      std::uint64_t seed);

} // namespace couplegen
