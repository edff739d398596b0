#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "evex/classifier.hpp"
#include "support/fixtures.hpp"

using namespace evex;

namespace {

ClassifierSpec fake(const std::string& mode, double timeout = 10.0)
{
    ClassifierSpec s;
    s.kind = ClassifierKind::External;
    s.class_count = 0;
    s.external.command = {EVEX_FAKE_CLASSIFIER_PATH, mode};
    s.external.timeout_seconds = timeout;
    return s;
}

ClassifierError::Kind failure_kind(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ClassifierError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no ClassifierError";
    return ClassifierError::Kind::SpawnFailed;
}

std::string failure_message(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ClassifierError& e) {
        return e.what();
    }
    return {};
}

// Brute-force reference for the blob model.
double blob_reference(const Image& img, double a, double b)
{
    const int x0 = (img.width() - 32) / 2;
    const int y0 = (img.height() - 32) / 2;
    int hits = 0;
    for (int y = y0; y < y0 + 32; ++y)
        for (int x = x0; x < x0 + 32; ++x) {
            const auto p = img.at(x, y);
            hits += (p.g - p.r >= 30 && p.g - p.b >= 30) ? 1 : 0;
        }
    const double f = hits / 1024.0;
    return 1.0 / (1.0 + std::exp(-a * (f - b)));
}

} // namespace

TEST(ConstantClassifier, ReturnsConfiguredProbability)
{
    ConstantClassifier c(0.7);
    const std::vector<Image> batch{Image(4, 4), fixtures::noise_image(4, 4, 1)};
    const auto out = predict_batch(c, batch);
    ASSERT_EQ(out.size(), 2u);
    for (const auto& p : out) {
        EXPECT_DOUBLE_EQ(p.probabilities[0], 0.3);
        EXPECT_DOUBLE_EQ(p.probabilities[1], 0.7);
    }
    EXPECT_THROW(ConstantClassifier(1.5), ValidationError);
}

TEST(BlobClassifier, NoMatchingPixelsGivesLogisticAtZero)
{
    BlobClassifier c{BlobSettings{}};
    const auto p = predict_batch(c, std::vector<Image>{Image(64, 64, kBlack)});
    EXPECT_NEAR(p[0].probabilities[1], 1.0 / (1.0 + std::exp(10.0 * 0.2)), 1e-15);
}

TEST(BlobClassifier, QuarterCoverage)
{
    Image img(64, 64, {200, 100, 100});
    for (int y = 16; y < 24; ++y)
        for (int x = 16; x < 48; ++x) img.at(x, y) = {20, 200, 40};
    // A green border outside the centre square must not count.
    for (int x = 0; x < 64; ++x) img.at(x, 0) = {0, 255, 0};
    BlobClassifier c{BlobSettings{}};
    const double p1 = predict_batch(c, std::vector<Image>{img})[0].probabilities[1];
    EXPECT_NEAR(p1, blob_reference(img, 10, 0.2), 1e-15);
    EXPECT_NEAR(p1, 1.0 / (1.0 + std::exp(-10.0 * 0.05)), 1e-15);
    EXPECT_NEAR(p1, 0.6225, 1e-4);
}

TEST(BlobClassifier, AgreesWithReferenceOnRandomImages)
{
    BlobClassifier c{BlobSettings{}};
    SplitMix64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto img = fixtures::toy_blob(48, 40, rng.uniform(0, 20), rng()).image;
        EXPECT_NEAR(c.probability(img), blob_reference(img, 10, 0.2), 1e-15);
    }
}

TEST(BlobClassifier, SmallImagesClampRegion)
{
    BlobClassifier c{BlobSettings{}};
    const auto p = c.probability(Image(8, 8, {0, 255, 0}));
    EXPECT_NEAR(p, 1.0 / (1.0 + std::exp(-10.0 * 0.8)), 1e-15);
}

TEST(BlobClassifier, MonotoneInMatchingPixels)
{
    BlobClassifier c{BlobSettings{}};
    Image img(64, 64, {180, 90, 160});
    double last = c.probability(img);
    for (int y = 16; y < 48; y += 3) {
        for (int x = 16; x < 48; ++x) img.at(x, y) = {30, 220, 30};
        const double p = c.probability(img);
        EXPECT_GE(p, last);
        last = p;
    }
}

TEST(PredictBatch, ConcatenationEqualsPerImageCalls)
{
    BlobClassifier c{BlobSettings{}};
    std::vector<Image> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(fixtures::toy_blob(40, 40, 3.0 * i, i).image);
    const auto all = predict_batch(c, batch);
    for (std::size_t i = 0; i < batch.size(); ++i)
        EXPECT_EQ(predict_batch(c, std::span(&batch[i], 1))[0].probabilities, all[i].probabilities);
}

TEST(PredictBatch, Preconditions)
{
    BlobClassifier c{BlobSettings{}};
    EXPECT_THROW(predict_batch(c, std::vector<Image>{}), ValidationError);
    EXPECT_THROW(predict_batch(c, std::vector<Image>{Image(4, 4), Image(5, 4)}), ValidationError);
}

TEST(ValidatePrediction, RejectsInvalid)
{
    EXPECT_NO_THROW(validate_prediction({{0.25, 0.75}}, 2, 0));
    EXPECT_THROW(validate_prediction({{0.5}}, 2, 0), ClassifierError);
    EXPECT_THROW(validate_prediction({{1.2, -0.2}}, 2, 0), ClassifierError);
    EXPECT_THROW(validate_prediction({{0.5, 0.6}}, 2, 0), ClassifierError);
    EXPECT_THROW(validate_prediction({{std::nan(""), 1.0}}, 2, 0), ClassifierError);
}

TEST(Protocol, HelloParsing)
{
    const auto h = parse_hello(R"({"hello":{"name":"m","classes":3}})", 1);
    EXPECT_EQ(h.name, "m");
    EXPECT_EQ(h.classes, 3);
    EXPECT_THROW(parse_hello(R"({"hello":{"name":"m","classes":1}})", 1), ClassifierError);
    EXPECT_THROW(parse_hello(R"({"hello":{"classes":2}})", 1), ClassifierError);
    EXPECT_THROW(parse_hello("[]", 1), ClassifierError);
}

TEST(Protocol, RequestEncoding)
{
    Image img(2, 1);
    img.at(0, 0) = {1, 2, 3};
    img.at(1, 0) = {255, 0, 128};
    const std::vector<Image> batch{img, img};
    EXPECT_EQ(encode_request(3, batch), R"({"id":3,"width":2,"height":1,"images":["AQID/wCA","AQID/wCA"]})");
}

TEST(ExternalClassifier, ConformingServerHandshake)
{
    const auto h = external_handshake(fake("conforming"));
    EXPECT_EQ(h.classes, 2);
    EXPECT_EQ(h.name, "fake-conforming");
}

TEST(ExternalClassifier, ReproducesBuiltinBlob)
{
    auto ext = make_classifier(fake("conforming"));
    BlobClassifier builtin{BlobSettings{}};
    SplitMix64 rng(17);
    std::vector<Image> batch;
    for (int i = 0; i < 50; ++i) batch.push_back(fixtures::toy_blob(64, 64, rng.uniform(0, 22), rng()).image);
    const auto a = predict_batch(*ext, batch);
    const auto b = predict_batch(builtin, batch);
    for (std::size_t i = 0; i < batch.size(); ++i)
        EXPECT_NEAR(a[i].probabilities[1], b[i].probabilities[1], 1e-9);
    // A second request uses the next id.
    EXPECT_NO_THROW(predict_batch(*ext, std::span(batch.data(), 3)));
}

TEST(ExternalClassifier, GarbageHelloNamesLineOne)
{
    const auto msg = failure_message([] { make_classifier(fake("garbage")); });
    EXPECT_NE(msg.find("protocol violation at line 1"), std::string::npos) << msg;
    EXPECT_EQ(failure_kind([] { make_classifier(fake("garbage")); }), ClassifierError::Kind::ProtocolViolation);
}

TEST(ExternalClassifier, FiveClassesAccepted)
{
    auto c = make_classifier(fake("classes5"));
    EXPECT_EQ(c->class_count(), 5);
    const auto out = predict_batch(*c, std::vector<Image>{Image(4, 4)});
    EXPECT_EQ(out[0].probabilities.size(), 5u);
}

TEST(ExternalClassifier, ClassCountMismatchRejected)
{
    auto spec = fake("classes5");
    spec.class_count = 2;
    EXPECT_EQ(failure_kind([&] { make_classifier(spec); }), ClassifierError::Kind::ProtocolViolation);
}

TEST(ExternalClassifier, DistinctFailureKinds)
{
    const std::vector<Image> batch{Image(4, 4)};
    EXPECT_EQ(failure_kind([&] {
                  auto c = make_classifier(fake("invalid"));
                  predict_batch(*c, batch);
              }),
              ClassifierError::Kind::InvalidOutput);
    EXPECT_EQ(failure_kind([&] {
                  auto c = make_classifier(fake("error"));
                  predict_batch(*c, batch);
              }),
              ClassifierError::Kind::ProcessFailed);
    EXPECT_EQ(failure_kind([&] {
                  auto c = make_classifier(fake("hangup"));
                  predict_batch(*c, batch);
              }),
              ClassifierError::Kind::ProcessFailed);
    EXPECT_EQ(failure_kind([&] {
                  auto c = make_classifier(fake("badid"));
                  predict_batch(*c, batch);
              }),
              ClassifierError::Kind::ProtocolViolation);
    EXPECT_EQ(failure_kind([&] {
                  auto c = make_classifier(fake("short"));
                  predict_batch(*c, batch);
              }),
              ClassifierError::Kind::ProtocolViolation);
}

TEST(ExternalClassifier, Timeouts)
{
    const auto start = std::chrono::steady_clock::now();
    EXPECT_EQ(failure_kind([] { make_classifier(fake("silent", 0.3)); }), ClassifierError::Kind::Timeout);
    EXPECT_EQ(failure_kind([] {
                  auto c = make_classifier(fake("timeout", 0.3));
                  predict_batch(*c, std::vector<Image>{Image(2, 2)});
              }),
              ClassifierError::Kind::Timeout);
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(ExternalClassifier, SpawnFailure)
{
    ClassifierSpec s;
    s.kind = ClassifierKind::External;
    s.external.command = {"/nonexistent/classifier-binary"};
    EXPECT_EQ(failure_kind([&] { make_classifier(s); }), ClassifierError::Kind::SpawnFailed);
    s.external.command = {};
    EXPECT_EQ(failure_kind([&] { make_classifier(s); }), ClassifierError::Kind::SpawnFailed);
}

TEST(ExternalClassifier, RejectsBadTimeout)
{
    auto s = fake("conforming", 0.0);
    EXPECT_THROW(make_classifier(s), ValidationError);
}
