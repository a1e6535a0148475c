#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace corrfair {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    using Error::Error;
};

// --- numeric / statistics -------------------------------------------------

struct LengthMismatch : Error {
    LengthMismatch(std::size_t nx, std::size_t ny)
        : Error("vector length mismatch: " + std::to_string(nx) + " vs " + std::to_string(ny)) {}
};

struct DegenerateVector : Error {
    explicit DegenerateVector(const std::string& what = "constant vector has no variance")
        : Error(what) {}
};

struct TooFewSamples : Error {
    explicit TooFewSamples(std::size_t n)
        : Error("need at least 3 samples, got " + std::to_string(n)) {}
};

// --- bias computation -----------------------------------------------------

struct EmptySubgroup : Error {
    EmptySubgroup(const std::string& subgroup, const std::string& context)
        : Error("no scores for subgroup '" + subgroup + "' (" + context + ")"), subgroup(subgroup) {}
    std::string subgroup;
};

struct IncompleteScores : Error {
    explicit IncompleteScores(std::vector<std::string> missing_pairs)
        : Error("incomplete scores; missing (model, subgroup) pairs: " + join(missing_pairs)),
          missing(std::move(missing_pairs)) {}
    std::vector<std::string> missing;

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size() && i < 8; ++i) {
            if (i) s += ", ";
            s += v[i];
        }
        if (v.size() > 8) s += ", ... (" + std::to_string(v.size()) + " total)";
        return s;
    }
};

struct MismatchedRoster : Error {
    explicit MismatchedRoster(const std::string& what) : Error(what) {}
};

struct MissingOriginal : Error {
    MissingOriginal() : Error("combination does not contain the original variant") {}
};

// --- augmentation ---------------------------------------------------------

struct NotOriginal : Error {
    explicit NotOriginal(const std::string& id)
        : Error("prompt '" + id + "' is already a paraphrase; refusing to paraphrase a paraphrase") {}
};

struct InsufficientParaphrases : Error {
    InsufficientParaphrases(std::size_t found_, std::size_t expected_, std::vector<std::string> items_ = {})
        : Error("parsed " + std::to_string(found_) + " distinct paraphrases, expected " +
                std::to_string(expected_)),
          found(found_), expected(expected_), items(std::move(items_)) {}
    std::size_t found;
    std::size_t expected;
    std::vector<std::string> items;  // the candidates that were recovered
};

// --- endpoints / scoring ----------------------------------------------------

struct EndpointError : Error {
    EndpointError(const std::string& endpoint, const std::string& detail)
        : Error("endpoint '" + endpoint + "' failed: " + detail) {}
};

struct ScoreOutOfRange : Error {
    explicit ScoreOutOfRange(double value)
        : Error("score " + std::to_string(value) + " outside [0,1]"), value(value) {}
    double value;
};

struct UnsupportedModel : Error {
    explicit UnsupportedModel(const std::string& name)
        : Error("model '" + name + "' has no usable endpoint") {}
};

// --- file ingest ------------------------------------------------------------

struct SchemaError : Error {
    SchemaError(const std::string& path, std::size_t line_, const std::string& detail)
        : Error(path + ":" + std::to_string(line_) + ": " + detail), line(line_) {}
    std::size_t line;
};

struct DuplicateKey : Error {
    explicit DuplicateKey(const std::string& key) : Error("duplicate key: " + key) {}
};

// --- search -----------------------------------------------------------------

struct SizeOutOfRange : Error {
    SizeOutOfRange(std::size_t k, std::size_t max_k)
        : Error("combination size " + std::to_string(k) + " outside [1, " + std::to_string(max_k) + "]") {}
};

struct AllDegenerate : Error {
    explicit AllDegenerate(const std::string& side)
        : Error("every combination for " + side + " has a constant bias vector; correlation undefined") {}
};

struct NoAugmentedMembers : Error {
    NoAugmentedMembers() : Error("combination holds only the original variant; no augmenter contributions") {}
};

// --- simulator ----------------------------------------------------------------

struct UnknownId : Error {
    UnknownId(const std::string& kind, const std::string& id)
        : Error("unknown " + kind + ": '" + id + "'") {}
};

struct IncompletePromptCover : Error {
    explicit IncompletePromptCover(const std::string& what) : Error(what) {}
};

// Non-fatal diagnostics collected during a computation.
struct WarningSink {
    std::vector<std::string> entries;
    void warn(std::string msg) { entries.push_back(std::move(msg)); }
    bool empty() const { return entries.empty(); }
};

}  // namespace corrfair
