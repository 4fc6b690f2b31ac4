#include "druid/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace druid {

namespace {

[[noreturn]] void malformed(std::size_t lineno, const std::string& what)
{
    throw DataError("line " + std::to_string(lineno) + ": " + what);
}

double parse_double(std::string_view tok, std::size_t lineno)
{
    // from_chars for double is not available everywhere; strtod is locale
    // sensitive but the C locale is what LIBSVM files are written in.
    std::string buf(tok);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size())
        malformed(lineno, "bad number '" + buf + "'");
    return v;
}

Sample parse_line(std::string_view line, std::size_t dim, std::size_t lineno)
{
    Sample s;
    s.w = Eigen::VectorXd::Zero(Eigen::Index(dim));
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos])))
            ++pos;
        std::size_t start = pos;
        while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos])))
            ++pos;
        return line.substr(start, pos - start);
    };

    auto label_tok = next_token();
    if (label_tok.empty())
        malformed(lineno, "missing label");
    double label = parse_double(label_tok, lineno);
    if (label == 1.0)
        s.y = 1.0;
    else if (label == -1.0 || label == 0.0)
        s.y = 0.0;
    else
        malformed(lineno, "label must be -1, 0 or +1");

    for (auto tok = next_token(); !tok.empty(); tok = next_token()) {
        auto colon = tok.find(':');
        if (colon == std::string_view::npos || colon == 0)
            malformed(lineno, "expected idx:val, got '" + std::string(tok) + "'");
        std::size_t idx = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + colon, idx);
        if (ec != std::errc() || ptr != tok.data() + colon || idx == 0)
            malformed(lineno, "bad feature index in '" + std::string(tok) + "'");
        if (idx > dim)
            malformed(lineno, "feature index " + std::to_string(idx) + " exceeds dimension " + std::to_string(dim));
        s.w(Eigen::Index(idx - 1)) = parse_double(tok.substr(colon + 1), lineno);
    }
    return s;
}

std::vector<Sample> parse_stream(std::istream& in, std::size_t dim, std::size_t max_samples)
{
    if (dim == 0)
        throw DataError("feature dimension must be positive");
    std::vector<Sample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        out.push_back(parse_line(line, dim, lineno));
        if (max_samples != 0 && out.size() == max_samples)
            break;
    }
    return out;
}

}  // namespace

std::vector<Sample> parse_libsvm(const std::filesystem::path& path, std::size_t dim, std::size_t max_samples)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open dataset " + path.string());
    try {
        return parse_stream(in, dim, max_samples);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<Sample> parse_libsvm_text(const std::string& text, std::size_t dim, std::size_t max_samples)
{
    std::istringstream in(text);
    return parse_stream(in, dim, max_samples);
}

std::string format_libsvm(const Sample& s)
{
    std::ostringstream out;
    out.precision(17);
    out << (s.y > 0.5 ? "+1" : "-1");
    for (Eigen::Index k = 0; k < s.w.size(); ++k)
        if (s.w(k) != 0.0)
            out << ' ' << (k + 1) << ':' << s.w(k);
    return out.str();
}

void write_libsvm(const std::vector<Sample>& samples, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (const auto& s : samples)
        out << format_libsvm(s) << '\n';
}

std::vector<AgentShard> partition(const std::vector<Sample>& samples, std::size_t n, PartitionStrategy strategy,
                                  Rng* rng)
{
    const std::size_t total = samples.size();
    if (n == 0)
        throw DataError("cannot partition across zero agents");
    if (n > total)
        throw DataError("more agents (" + std::to_string(n) + ") than samples (" + std::to_string(total) + ")");
    const std::size_t dim = std::size_t(samples.front().w.size());

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (strategy == PartitionStrategy::shuffled) {
        if (rng == nullptr)
            throw DataError("shuffled partition needs a random stream");
        std::shuffle(order.begin(), order.end(), *rng);
    }

    std::vector<AgentShard> shards(n);
    const std::size_t base = total / n;
    const std::size_t extra = total % n;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = base + (i < extra ? 1 : 0);
        auto& shard = shards[i];
        shard.agent = i;
        shard.features.resize(Eigen::Index(count), Eigen::Index(dim));
        shard.labels.resize(Eigen::Index(count));
        shard.source_rows.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            const auto& s = samples[order[cursor]];
            if (std::size_t(s.w.size()) != dim)
                throw DataError("samples disagree on feature dimension");
            shard.features.row(Eigen::Index(j)) = s.w.transpose();
            shard.labels(Eigen::Index(j)) = s.y;
            shard.source_rows[j] = order[cursor];
            ++cursor;
        }
    }
    return shards;
}

std::vector<std::size_t> sample_batch(const AgentShard& shard, std::size_t size, Rng& rng)
{
    const std::size_t pool = shard.size();
    if (size == 0 || size > pool)
        throw DataError("batch size " + std::to_string(size) + " outside [1, " + std::to_string(pool) + "] for agent " +
                        std::to_string(shard.agent));
    // Partial Fisher-Yates: the first `size` slots are a uniform sample
    // without replacement.
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < size; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(size);
    return idx;
}

std::vector<Sample> synthesize_logistic_dataset(const SyntheticSpec& spec)
{
    if (spec.categories >= spec.dim)
        throw DataError("one-hot block must leave room for continuous features");
    Rng rng(splitmix64(spec.seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> category(0, spec.categories > 0 ? spec.categories - 1 : 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd truth{Eigen::Index(spec.dim)};
    for (std::size_t k = 0; k < spec.dim; ++k)
        truth(Eigen::Index(k)) = k < spec.categories ? spec.category_bias_mean + spec.category_bias_sd * gauss(rng)
                                                     : spec.weight_sd * gauss(rng);

    std::vector<Sample> out;
    out.reserve(spec.samples);
    for (std::size_t s = 0; s < spec.samples; ++s) {
        Sample sample;
        sample.w = Eigen::VectorXd::Zero(Eigen::Index(spec.dim));
        if (spec.categories > 0)
            sample.w(Eigen::Index(category(rng))) = 1.0;
        for (std::size_t k = spec.categories; k < spec.dim; ++k)
            sample.w(Eigen::Index(k)) = std::clamp(spec.continuous_sd * gauss(rng), -1.0, 1.0);
        const double prob = 1.0 / (1.0 + std::exp(-truth.dot(sample.w)));
        sample.y = unif(rng) < prob ? 1.0 : 0.0;
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<Sample> random_logistic_samples(std::size_t count, std::size_t dim, Rng& rng, double feature_sd)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(Eigen::Index(dim));
    for (auto& v : truth)
        v = gauss(rng);
    std::vector<Sample> out(count);
    for (auto& s : out) {
        s.w.resize(Eigen::Index(dim));
        for (auto& v : s.w)
            v = feature_sd * gauss(rng);
        s.y = unif(rng) < 1.0 / (1.0 + std::exp(-truth.dot(s.w))) ? 1.0 : 0.0;
    }
    return out;
}

std::uint64_t dataset_digest(std::span<const AgentShard> shards)
{
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
    for (const auto& shard : shards) {
        mix(shard.size());
        mix(shard.dim());
        for (Eigen::Index r = 0; r < shard.features.rows(); ++r) {
            std::uint64_t bits = 0;
            double label = shard.labels(r);
            std::memcpy(&bits, &label, sizeof bits);
            mix(bits);
            for (Eigen::Index c = 0; c < shard.features.cols(); ++c) {
                double v = shard.features(r, c);
                std::memcpy(&bits, &v, sizeof bits);
                mix(bits);
            }
        }
    }
    return h;
}

}  // namespace druid
