#pragma once

#include <json.hpp>

#include <string>

#include "prc/concept_model.hpp"

namespace prc {

// On-disk schema for a full concept model:
// { "alphabet": "abcd", "l_max": 16,
//   "concepts": [{"id": ..., "dist": {string: prob}, "attributes": [...]}],
//   "prior": {id: prob}, "map": {id: id}, "degenerate": id,
//   "responses": {id: {response: prob}} }

struct ConceptModelFile {
    std::string alphabet;
    std::size_t l_max = kDefaultMaxTokens;
    ConceptSpace space;
    ConceptMap map;
    ResponseModel responses;
};

inline nlohmann::json to_json(const ConceptModelFile& f) {
    nlohmann::json j;
    j["alphabet"] = f.alphabet;
    j["l_max"] = f.l_max;
    j["concepts"] = nlohmann::json::array();
    for (const auto& c : f.space.concepts()) {
        nlohmann::json jc;
        jc["id"] = c.id;
        jc["dist"] = nlohmann::json::object();
        for (const auto& [z, p] : c.output_dist.table()) jc["dist"][z] = p;
        jc["attributes"] = c.attributes;
        j["concepts"].push_back(jc);
    }
    j["prior"] = nlohmann::json::object();
    for (const auto& [id, p] : f.space.prior().table()) j["prior"][id] = p;
    j["map"] = f.map.mapping();
    j["degenerate"] = f.map.degenerate_id();
    j["responses"] = nlohmann::json::object();
    for (const auto& [id, d] : f.responses.tables()) {
        j["responses"][id] = nlohmann::json::object();
        for (const auto& [y, p] : d.table()) j["responses"][id][y] = p;
    }
    return j;
}

inline ConceptModelFile concept_model_from_json(const nlohmann::json& j) {
    std::vector<Concept> concepts;
    for (const auto& jc : j.at("concepts")) {
        Dist::Table dist;
        for (const auto& [z, p] : jc.at("dist").items()) dist[z] = p.get<double>();
        std::vector<std::string> attrs;
        if (jc.contains("attributes")) attrs = jc["attributes"].get<std::vector<std::string>>();
        concepts.push_back({jc.at("id").get<std::string>(), Dist(dist), attrs});
    }
    Dist::Table prior;
    for (const auto& [id, p] : j.at("prior").items()) prior[id] = p.get<double>();
    const std::size_t l_max = j.value("l_max", kDefaultMaxTokens);

    std::map<std::string, std::string> mapping;
    if (j.contains("map")) mapping = j["map"].get<std::map<std::string, std::string>>();
    std::string degenerate = j.value("degenerate", std::string("theta_d"));

    std::map<std::string, Dist> tables;
    if (j.contains("responses"))
        for (const auto& [id, jt] : j["responses"].items()) {
            Dist::Table t;
            for (const auto& [y, p] : jt.items()) t[y] = p.get<double>();
            tables.emplace(id, Dist(t));
        }

    return ConceptModelFile{j.value("alphabet", std::string{}), l_max,
                            ConceptSpace(std::move(concepts), Dist(prior), l_max),
                            ConceptMap(std::move(mapping), std::move(degenerate)),
                            ResponseModel(std::move(tables))};
}

}  // namespace prc
