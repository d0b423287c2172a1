#include <fstream>
#include <sstream>

#include "json.hpp"
#include "structrep/corpus.hpp"
#include "structrep/error.hpp"
#include "structrep/io.hpp"

namespace structrep {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Taxonomy load_taxonomy(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed taxonomy: " + e.what());
    }
    if (!doc.is_object()) throw InputError(path.string() + ": taxonomy must be an object aspect -> category");
    std::map<std::string, std::string> mapping;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.value().is_string()) {
            throw InputError(path.string() + ": category of aspect '" + it.key() + "' must be a string");
        }
        mapping.emplace(it.key(), it.value().get<std::string>());
    }
    return Taxonomy(std::move(mapping));
}

void save_taxonomy(const Taxonomy& taxonomy, const std::filesystem::path& path) {
    ordered_json doc = ordered_json::object();
    for (const auto& [aspect, category] : taxonomy.mapping()) doc[aspect] = category;
    write_text_file(path, doc.dump(2) + "\n");
}

namespace {

Claim parse_claim(const json& record, std::size_t number) {
    const auto where = [&] { return "record " + std::to_string(number) + ": "; };
    if (!record.is_object()) throw InputError(where() + "expected an object");
    Claim claim;
    try {
        claim.id = record.at("id").get<std::string>();
        if (auto it = record.find("text"); it != record.end() && !it->is_null()) {
            claim.text = it->get<std::string>();
        }
        claim.embedding = record.at("embedding").get<std::vector<double>>();
        for (const auto& label : record.at("labels")) {
            claim.labels.push_back(
                Label{label.at("aspect").get<std::string>(), parse_action(label.at("action").get<std::string>())});
        }
    } catch (const json::exception& e) {
        throw InputError(where() + "malformed record: " + e.what());
    } catch (const InputError& e) {
        throw InputError(where() + e.what());
    }
    return claim;
}

}  // namespace

Corpus parse_corpus(std::string_view ndjson, Taxonomy taxonomy) {
    Corpus corpus;
    corpus.taxonomy = std::move(taxonomy);
    std::istringstream in{std::string(ndjson)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++number;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError("record " + std::to_string(number) + ": malformed JSON: " + e.what());
        }
        Claim claim = parse_claim(record, number);
        if (corpus.claims.empty()) corpus.dim = claim.embedding.size();
        corpus.claims.push_back(std::move(claim));
    }
    corpus.validate();
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const std::filesystem::path& taxonomy_path) {
    auto taxonomy = load_taxonomy(taxonomy_path);
    try {
        return parse_corpus(read_text_file(path), std::move(taxonomy));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& claim : corpus.claims) {
        ordered_json record;
        record["id"] = claim.id;
        if (claim.text) record["text"] = *claim.text;
        record["embedding"] = claim.embedding;
        record["labels"] = ordered_json::array();
        for (const auto& label : claim.labels) {
            record["labels"].push_back({{"aspect", label.aspect}, {"action", std::string(to_string(label.action))}});
        }
        out += record.dump();
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_text_file(path, serialize_corpus(corpus));
}

FoldSplit load_fold(const std::filesystem::path& path) {
    try {
        const auto doc = json::parse(read_text_file(path));
        FoldSplit fold;
        fold.fold_id = doc.at("fold_id").get<int>();
        fold.unseen_categories = doc.at("unseen_categories").get<std::vector<std::string>>();
        fold.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
        fold.seen_test_ids = doc.at("seen_test_ids").get<std::vector<std::string>>();
        fold.unseen_test_ids = doc.at("unseen_test_ids").get<std::vector<std::string>>();
        return fold;
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed fold file: " + e.what());
    }
}

void save_fold(const FoldSplit& fold, const std::filesystem::path& path) {
    ordered_json doc;
    doc["fold_id"] = fold.fold_id;
    doc["unseen_categories"] = fold.unseen_categories;
    doc["train_ids"] = fold.train_ids;
    doc["seen_test_ids"] = fold.seen_test_ids;
    doc["unseen_test_ids"] = fold.unseen_test_ids;
    write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace structrep
