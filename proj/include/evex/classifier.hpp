#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evex/base64.hpp"
#include "evex/error.hpp"
#include "evex/image.hpp"
#include "evex/subprocess.hpp"

namespace evex {

struct Prediction {
    std::vector<double> probabilities;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

enum class ClassifierKind { BuiltinBlob, BuiltinConstant, External };

/// Center-region colour detector: p1 = logistic(gain * (f - offset)), where f is
/// the fraction of centre pixels whose green exceeds red and blue by >= green_margin.
struct BlobSettings {
    int region_width = 32;
    int region_height = 32;
    int green_margin = 30;
    double gain = 10.0;
    double offset = 0.2;
};

struct ConstantSettings {
    double p1 = 0.5;
};

struct ExternalSettings {
    std::vector<std::string> command;
    double timeout_seconds = 60.0;
};

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::BuiltinBlob;
    /// 0 for external classifiers means "whatever the server announces".
    int class_count = 2;
    BlobSettings blob;
    ConstantSettings constant;
    ExternalSettings external;
};

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual std::string name() const = 0;
    virtual int class_count() const = 0;

    /// One prediction per image, in order. Callers go through predict_batch().
    virtual std::vector<Prediction> predict(std::span<const Image> images) = 0;
};

// ---------------------------------------------------------------------------
// Builtins

struct CenterRegion {
    int x0, y0, width, height;
};

inline CenterRegion center_region(int image_width, int image_height, int region_width, int region_height)
{
    const int w = std::clamp(region_width, 1, image_width);
    const int h = std::clamp(region_height, 1, image_height);
    return {(image_width - w) / 2, (image_height - h) / 2, w, h};
}

inline bool is_blob_pixel(Rgb p, int margin)
{
    return int{p.g} - int{p.r} >= margin && int{p.g} - int{p.b} >= margin;
}

inline double blob_fraction(const Image& image, const BlobSettings& s)
{
    const auto region = center_region(image.width(), image.height(), s.region_width, s.region_height);
    std::size_t hits = 0;
    for (int y = region.y0; y < region.y0 + region.height; ++y)
        for (int x = region.x0; x < region.x0 + region.width; ++x)
            if (is_blob_pixel(image.at(x, y), s.green_margin)) ++hits;
    return static_cast<double>(hits) / (static_cast<double>(region.width) * region.height);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

class BlobClassifier final : public Classifier {
public:
    explicit BlobClassifier(BlobSettings settings) : settings_(settings)
    {
        if (settings_.region_width < 1 || settings_.region_height < 1)
            throw ValidationError("blob region must be at least 1x1");
        if (!std::isfinite(settings_.gain) || !std::isfinite(settings_.offset))
            throw ValidationError("blob gain/offset must be finite");
    }

    std::string name() const override { return "builtin-blob"; }
    int class_count() const override { return 2; }

    double probability(const Image& image) const
    {
        return logistic(settings_.gain * (blob_fraction(image, settings_) - settings_.offset));
    }

    std::vector<Prediction> predict(std::span<const Image> images) override
    {
        std::vector<Prediction> out;
        out.reserve(images.size());
        for (const auto& img : images) {
            const double p1 = probability(img);
            out.push_back({{1.0 - p1, p1}});
        }
        return out;
    }

private:
    BlobSettings settings_;
};

class ConstantClassifier final : public Classifier {
public:
    explicit ConstantClassifier(double p1) : p1_(p1)
    {
        if (!(p1 >= 0.0 && p1 <= 1.0)) throw ValidationError("constant classifier p1 must be in [0, 1]");
    }

    std::string name() const override { return "builtin-constant"; }
    int class_count() const override { return 2; }

    std::vector<Prediction> predict(std::span<const Image> images) override
    {
        return std::vector<Prediction>(images.size(), Prediction{{1.0 - p1_, p1_}});
    }

private:
    double p1_;
};

// ---------------------------------------------------------------------------
// External process, newline-delimited JSON:
//
//   server -> client  {"hello":{"name":<string>,"classes":<int>}}
//   client -> server  {"id":<int>,"width":<int>,"height":<int>,"images":[<base64 RGB8>, ...]}
//   server -> client  {"id":<int>,"probs":[[<float> x classes], ...]}
//
// One outstanding request at a time; ids increase from 0.

struct Handshake {
    std::string name;
    int classes = 0;
};

inline Handshake parse_hello(const std::string& line, std::size_t line_number)
{
    auto violation = [&](const std::string& why) {
        return ClassifierError(ClassifierError::Kind::ProtocolViolation,
                               "classifier protocol violation at line " + std::to_string(line_number) + ": " + why);
    };
    const auto msg = nlohmann::json::parse(line, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) throw violation("expected a JSON hello object");
    const auto it = msg.find("hello");
    if (it == msg.end() || !it->is_object()) throw violation("missing \"hello\"");
    const auto name = it->find("name");
    const auto classes = it->find("classes");
    if (name == it->end() || !name->is_string()) throw violation("hello.name must be a string");
    if (classes == it->end() || !classes->is_number_integer()) throw violation("hello.classes must be an integer");
    Handshake h{name->get<std::string>(), classes->get<int>()};
    if (h.classes < 2) throw violation("hello.classes must be >= 2, got " + std::to_string(h.classes));
    return h;
}

inline std::string encode_request(std::int64_t id, std::span<const Image> images)
{
    nlohmann::ordered_json msg;
    msg["id"] = id;
    msg["width"] = images.front().width();
    msg["height"] = images.front().height();
    auto& list = msg["images"] = nlohmann::ordered_json::array();
    std::vector<std::uint8_t> raw;
    for (const auto& img : images) {
        raw.resize(img.size() * 3);
        for (std::size_t i = 0; i < img.size(); ++i) {
            raw[3 * i] = img[i].r;
            raw[3 * i + 1] = img[i].g;
            raw[3 * i + 2] = img[i].b;
        }
        list.push_back(base64_encode(raw));
    }
    return msg.dump();
}

class ExternalClassifier final : public Classifier {
public:
    explicit ExternalClassifier(const ExternalSettings& settings, int expected_classes = 0)
        : timeout_(checked_timeout(settings.timeout_seconds)), process_(settings.command)
    {
        const auto line = next_line();
        if (!line)
            throw ClassifierError(ClassifierError::Kind::ProcessFailed, "classifier exited before sending hello");
        hello_ = parse_hello(*line, lines_read_);
        if (expected_classes != 0 && expected_classes != hello_.classes)
            throw ClassifierError(ClassifierError::Kind::ProtocolViolation,
                                  "classifier announced " + std::to_string(hello_.classes) + " classes, expected " +
                                      std::to_string(expected_classes));
    }

    std::string name() const override { return hello_.name; }
    int class_count() const override { return hello_.classes; }
    const Handshake& handshake() const noexcept { return hello_; }

    std::vector<Prediction> predict(std::span<const Image> images) override
    {
        std::lock_guard lock(mutex_);
        const std::int64_t id = next_id_++;
        process_.write_line(encode_request(id, images));
        const auto line = next_line();
        if (!line) throw ClassifierError(ClassifierError::Kind::ProcessFailed, "classifier closed its output");
        return parse_response(*line, id, images.size());
    }

private:
    static std::chrono::milliseconds checked_timeout(double seconds)
    {
        if (!(seconds > 0.0 && seconds < 1e7)) throw ValidationError("external classifier timeout must be > 0");
        return std::chrono::milliseconds(static_cast<long long>(std::ceil(seconds * 1000.0)));
    }

    std::optional<std::string> next_line()
    {
        auto line = process_.read_line(timeout_);
        if (line) ++lines_read_;
        return line;
    }

    std::vector<Prediction> parse_response(const std::string& line, std::int64_t id, std::size_t count) const
    {
        auto violation = [&](const std::string& why) {
            return ClassifierError(ClassifierError::Kind::ProtocolViolation, "classifier protocol violation at line " +
                                                                                 std::to_string(lines_read_) + ": " + why);
        };
        const auto msg = nlohmann::json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object()) throw violation("expected a JSON response object");
        if (const auto err = msg.find("error"); err != msg.end())
            throw ClassifierError(ClassifierError::Kind::ProcessFailed,
                                  "classifier reported an error: " + (err->is_string() ? err->get<std::string>()
                                                                                       : err->dump()));
        const auto rid = msg.find("id");
        if (rid == msg.end() || !rid->is_number_integer() || rid->get<std::int64_t>() != id)
            throw violation("response id does not match request " + std::to_string(id));
        const auto probs = msg.find("probs");
        if (probs == msg.end() || !probs->is_array() || probs->size() != count)
            throw violation("expected " + std::to_string(count) + " probability vectors");
        std::vector<Prediction> out;
        out.reserve(count);
        for (const auto& row : *probs) {
            if (!row.is_array() || row.size() != static_cast<std::size_t>(hello_.classes))
                throw violation("each probability vector must have " + std::to_string(hello_.classes) + " entries");
            Prediction p;
            for (const auto& v : row) {
                if (!v.is_number()) throw violation("probabilities must be numbers");
                p.probabilities.push_back(v.get<double>());
            }
            out.push_back(std::move(p));
        }
        return out;
    }

    std::chrono::milliseconds timeout_;
    LineProcess process_;
    Handshake hello_;
    std::size_t lines_read_ = 0;
    std::int64_t next_id_ = 0;
    std::mutex mutex_;
};

/// Spawns and handshakes an external classifier; returns what it announced.
inline Handshake external_handshake(const ClassifierSpec& spec)
{
    if (spec.kind != ClassifierKind::External) throw ValidationError("handshake requires an external classifier");
    ExternalClassifier client(spec.external, spec.class_count);
    return client.handshake();
}

inline std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec)
{
    switch (spec.kind) {
    case ClassifierKind::BuiltinBlob:
        if (spec.class_count != 2) throw ValidationError("builtin-blob has exactly 2 classes");
        return std::make_unique<BlobClassifier>(spec.blob);
    case ClassifierKind::BuiltinConstant:
        if (spec.class_count != 2) throw ValidationError("builtin-constant has exactly 2 classes");
        return std::make_unique<ConstantClassifier>(spec.constant.p1);
    case ClassifierKind::External:
        return std::make_unique<ExternalClassifier>(spec.external, spec.class_count);
    }
    throw ValidationError("unknown classifier kind");
}

inline void validate_prediction(const Prediction& p, int classes, std::size_t index)
{
    auto invalid = [&](const std::string& why) {
        return ClassifierError(ClassifierError::Kind::InvalidOutput,
                               "prediction " + std::to_string(index) + " invalid: " + why);
    };
    if (p.probabilities.size() != static_cast<std::size_t>(classes)) throw invalid("wrong number of classes");
    double sum = 0.0;
    for (double v : p.probabilities) {
        if (!std::isfinite(v)) throw invalid("non-finite probability");
        if (v < 0.0 || v > 1.0) throw invalid("probability outside [0, 1]");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw invalid("probabilities sum to " + std::to_string(sum));
}

/// Checks batch preconditions, runs the classifier, and enforces the simplex invariants.
inline std::vector<Prediction> predict_batch(Classifier& classifier, std::span<const Image> images)
{
    if (images.empty()) throw ValidationError("prediction batch must not be empty");
    for (const auto& img : images)
        if (!img.same_shape(images.front())) throw ValidationError("all images in a batch must share dimensions");
    auto out = classifier.predict(images);
    if (out.size() != images.size())
        throw ClassifierError(ClassifierError::Kind::InvalidOutput, "classifier returned the wrong number of predictions");
    for (std::size_t i = 0; i < out.size(); ++i) validate_prediction(out[i], classifier.class_count(), i);
    return out;
}

} // namespace evex
