#include <fstream>

#include "doctest.h"
#include "support_common.hpp"
#include "voxsyn/csvio.hpp"
#include "voxsyn/tabular.hpp"

using namespace voxsyn;
using namespace voxsyn::tabular;

namespace {

ClinicalRecord rec(std::string id, std::map<std::string, std::string> values) {
    ClinicalRecord r;
    r.subject_id = std::move(id);
    r.values = std::move(values);
    return r;
}

}  // namespace

TEST_SUITE_BEGIN("tabular");

TEST_CASE("validate_record: in-range passes, out-of-range becomes absent") {
    Schema s = default_schema();
    ClinicalRecord ok = rec("a", {{"age", "45"}, {"smoker", "yes"}});
    ClinicalRecord v = validate_record(ok, s);
    CHECK(v.values == ok.values);

    ClinicalRecord neg = rec("b", {{"age", "-3"}, {"smoker", "yes"}});
    ClinicalRecord v2 = validate_record(neg, s);
    CHECK(!v2.has("age"));
    CHECK(v2.values.at("smoker") == "yes");

    ClinicalRecord maybe = rec("c", {{"age", "45"}, {"smoker", "maybe"}});
    ClinicalRecord v3 = validate_record(maybe, s);
    CHECK(v3.values.at("age") == "45");
    CHECK(!v3.has("smoker"));

    ClinicalRecord junk = rec("d", {{"age", "forty"}});
    CHECK(!validate_record(junk, s).has("age"));

    ClinicalRecord unknown = rec("e", {{"height", "180"}});
    CHECK_THROWS_WITH_AS(validate_record(unknown, s),
                         doctest::Contains("height"), ValidationError);
}

TEST_CASE("render_record: schema order, omission, fallback") {
    Schema s = default_schema();
    TextDescription t1 = render_record(rec("a", {{"gender", "male"}, {"age", "45"}}), s);
    CHECK(t1.text == "The patient is male. The patient is 45 years old.");
    CHECK(t1.rendered_attributes == std::vector<std::string>{"gender", "age"});

    TextDescription t2 = render_record(rec("b", {{"gender", "male"}}), s);
    CHECK(t2.text == "The patient is male.");

    TextDescription t3 = render_record(rec("c", {}), s);
    CHECK(t3.text == kEmptyRecordText);
    CHECK(t3.rendered_attributes.empty());
}

TEST_CASE("rendering is deterministic and value-verbatim") {
    Schema s = default_schema();
    ClinicalRecord r = rec("a", {{"age", "62.5"}, {"diagnosis", "IPF"}});
    TextDescription a = render_record(r, s);
    TextDescription b = render_record(r, s);
    CHECK(a.text == b.text);
    CHECK(a.text == "The patient is 62.5 years old. The diagnosis is IPF.");
    // no trailing whitespace, single-space separators
    CHECK(a.text.back() == '.');
    CHECK(a.text.find("  ") == std::string::npos);
}

TEST_CASE("monotone containment: one more attribute appends, never reorders") {
    Schema s = default_schema();
    ClinicalRecord r1 = rec("a", {{"gender", "female"}});
    ClinicalRecord r2 = r1;
    r2.values["smoker"] = "no";
    TextDescription t1 = render_record(r1, s);
    TextDescription t2 = render_record(r2, s);
    CHECK(t2.text.find(t1.text) != std::string::npos);
}

TEST_CASE("render_table: order preserved, errors carry row index") {
    Schema s = default_schema();
    CHECK(render_table({}, s).empty());

    std::vector<ClinicalRecord> same = {rec("a", {{"age", "50"}}), rec("b", {{"age", "50"}})};
    auto texts = render_table(same, s);
    REQUIRE(texts.size() == 2);
    CHECK(texts[0].text == texts[1].text);

    std::vector<ClinicalRecord> rows = {
        rec("a", {{"gender", "male"}, {"age", "40"}}),
        rec("b", {{"smoker", "ex-smoker"}}),
        rec("c", {}),
    };
    auto out = render_table(rows, s);
    CHECK(out[0].rendered_attributes == std::vector<std::string>{"gender", "age"});
    CHECK(out[1].rendered_attributes == std::vector<std::string>{"smoker"});
    CHECK(out[2].rendered_attributes.empty());

    std::vector<ClinicalRecord> bad = {rec("a", {}), rec("b", {{"bogus", "1"}})};
    CHECK_THROWS_WITH_AS(render_table(bad, s), doctest::Contains("row 1"), ValidationError);
}

TEST_CASE("omission soundness over randomized records (property)") {
    Schema s = default_schema();
    Rng rng(20240517);
    for (int it = 0; it < 1000; ++it) {
        ClinicalRecord r;
        r.subject_id = "p" + std::to_string(it);
        std::vector<std::string> expected;
        for (const auto& attr : s) {
            const auto roll = rng.uniform_index(4);
            if (roll == 0) continue;  // absent
            std::string value;
            bool valid = false;
            if (roll == 1) {
                // invalid value; free-text attributes accept anything non-empty,
                // so they fall through to absent instead
                if (attr.kind == AttrKind::Numeric) value = "999";
                else if (!attr.valid_values.empty()) value = "zzz";
            } else {
                valid = true;
                switch (attr.kind) {
                    case AttrKind::Numeric:
                        value = std::to_string(rng.uniform_range(0, 120));
                        break;
                    default:
                        value = attr.valid_values.empty()
                                    ? "free text"
                                    : attr.valid_values[rng.uniform_index(attr.valid_values.size())];
                }
            }
            if (value.empty() && roll == 1) {
                // empty cells are represented as absent in records
                continue;
            }
            r.values[attr.name] = value;
            if (valid) expected.push_back(attr.name);
        }
        ClinicalRecord v = validate_record(r, s);
        TextDescription t = render_record(v, s);
        CHECK(t.rendered_attributes == expected);
        // rendering the unvalidated record agrees (validation only drops invalid)
        CHECK(render_record(r, s).rendered_attributes == expected);
    }
}

TEST_CASE("schema round trip through file") {
    testsup::TempDir dir;
    Schema s = default_schema();
    const auto path = dir / "schema.json";
    save_schema(s, path);
    Schema loaded = load_schema(path);
    REQUIRE(loaded.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        CHECK(loaded[i].name == s[i].name);
        CHECK(loaded[i].phrase_template == s[i].phrase_template);
        CHECK(loaded[i].valid_values == s[i].valid_values);
    }
    CHECK_THROWS_AS(load_schema(dir / "missing.json"), IoError);
}

TEST_CASE("csv ingestion: empty cell is absent, strict mode rejects unknown columns") {
    testsup::TempDir dir;
    const auto csv = dir / "patients.csv";
    {
        std::ofstream out(csv);
        out << "subject_id,age,gender,smoker\n";
        out << "p1,45,male,yes\n";
        out << "p2,,female,no\n";
        out << "p3,200,male,\n";
    }
    Schema s = default_schema();
    auto records = records_from_csv(csv, s, true);
    REQUIRE(records.size() == 3);
    CHECK(!records[1].has("age"));
    CHECK(records[2].values.at("age") == "200");  // kept raw; validation drops it
    CHECK(!validate_record(records[2], s).has("age"));
    CHECK(!records[2].has("smoker"));

    const auto bad = dir / "extra.csv";
    {
        std::ofstream out(bad);
        out << "subject_id,age,shoe_size\np1,45,44\n";
    }
    CHECK_THROWS_WITH_AS(records_from_csv(bad, s, true), doctest::Contains("shoe_size"),
                         ValidationError);
    auto lenient = records_from_csv(bad, s, false);
    CHECK(lenient[0].values.count("shoe_size") == 0);
}

TEST_CASE("csv quoting round trip") {
    csvio::Table t;
    t.header = {"subject_id", "diagnosis"};
    t.rows = {{"p1", "fibrosis, severe"}, {"p2", "says \"stable\""}};
    testsup::TempDir dir;
    const auto path = dir / "q.csv";
    csvio::write_csv(path, t);
    csvio::Table back = csvio::read_csv(path);
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
}

TEST_CASE("texts and render manifest outputs") {
    testsup::TempDir dir;
    Schema s = default_schema();
    std::vector<ClinicalRecord> records = {rec("p1", {{"gender", "male"}}), rec("p2", {})};
    auto texts = render_table(records, s);
    write_texts(texts, dir / "texts.txt");
    std::ifstream in(dir / "texts.txt");
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l1 == "The patient is male.");
    CHECK(l2 == kEmptyRecordText);
    write_render_manifest(records, texts, dir / "manifest.json");
    std::ifstream jm(dir / "manifest.json");
    std::string all((std::istreambuf_iterator<char>(jm)), std::istreambuf_iterator<char>());
    CHECK(all.find("\"p1\"") != std::string::npos);
    CHECK(all.find("gender") != std::string::npos);
}

TEST_SUITE_END();
