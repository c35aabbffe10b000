#pragma once

#include <mixsearch/bow.hpp>
#include <mixsearch/error.hpp>
#include <mixsearch/models.hpp>

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mixsearch::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV: row-major, comma separated, no header.

/// Shortest round-trip decimal form of x.
inline std::string format_double(double x) {
	char buf[32];
	const auto res = std::to_chars(buf, buf + sizeof(buf), x);
	return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& os, const Matrix& m) {
	for (Eigen::Index i = 0; i < m.rows(); ++i) {
		for (Eigen::Index j = 0; j < m.cols(); ++j) {
			if (j > 0)
				os << ',';
			os << format_double(m(i, j));
		}
		os << '\n';
	}
}

inline Matrix read_csv(std::istream& is) {
	std::vector<std::vector<double>> rows;
	std::string line;
	std::size_t line_no = 0;
	while (std::getline(is, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r')
			line.pop_back();
		if (line.find_first_not_of(" \t") == std::string::npos)
			continue;
		std::vector<double> row;
		std::stringstream ss(line);
		std::string cell;
		while (std::getline(ss, cell, ',')) {
			const auto first = cell.find_first_not_of(" \t");
			const auto last = cell.find_last_not_of(" \t");
			if (first == std::string::npos)
				throw Error(ErrorCode::InvalidInput, "csv: empty cell on line " + std::to_string(line_no));
			const std::string_view token(cell.data() + first, last - first + 1);
			double value = 0.0;
			const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
			if (res.ec != std::errc() || res.ptr != token.data() + token.size())
				throw Error(ErrorCode::InvalidInput, "csv: bad number on line " + std::to_string(line_no));
			row.push_back(value);
		}
		if (!rows.empty() && row.size() != rows.front().size())
			throw Error(ErrorCode::InvalidInput, "csv: ragged row on line " + std::to_string(line_no));
		rows.push_back(std::move(row));
	}
	Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
	for (std::size_t i = 0; i < rows.size(); ++i)
		for (std::size_t j = 0; j < rows[i].size(); ++j)
			m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
	return m;
}

inline std::ifstream open_in(const std::string& path) {
	std::ifstream in(path);
	if (!in)
		throw Error(ErrorCode::InvalidInput, "cannot open " + path);
	return in;
}

inline std::ofstream open_out(const std::string& path) {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error(ErrorCode::InvalidInput, "cannot write " + path);
	return out;
}

inline Matrix read_csv_file(const std::string& path) {
	auto in = open_in(path);
	return read_csv(in);
}

inline void write_csv_file(const std::string& path, const Matrix& m) {
	auto out = open_out(path);
	write_csv(out, m);
}

// ---------------------------------------------------------------------------
// JSON helpers. Component matrices are stored as a list of columns.

inline json to_json(const Vector& v) {
	json j = json::array();
	for (Eigen::Index i = 0; i < v.size(); ++i)
		j.push_back(v(i));
	return j;
}

inline json columns_to_json(const Matrix& m) {
	json j = json::array();
	for (Eigen::Index c = 0; c < m.cols(); ++c)
		j.push_back(to_json(m.col(c)));
	return j;
}

inline Vector vector_from_json(const json& j, const char* what) {
	if (!j.is_array())
		throw Error(ErrorCode::InvalidInput, std::string(what) + ": expected an array of numbers");
	Vector v(static_cast<Eigen::Index>(j.size()));
	for (std::size_t i = 0; i < j.size(); ++i) {
		if (!j[i].is_number())
			throw Error(ErrorCode::InvalidInput, std::string(what) + ": expected numbers");
		v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
	}
	return v;
}

inline Matrix columns_from_json(const json& j, const char* what) {
	if (!j.is_array() || j.empty())
		throw Error(ErrorCode::InvalidInput, std::string(what) + ": expected a nonempty list of columns");
	const Vector first = vector_from_json(j[0], what);
	Matrix m(first.size(), static_cast<Eigen::Index>(j.size()));
	for (std::size_t c = 0; c < j.size(); ++c) {
		const Vector col = vector_from_json(j[c], what);
		if (col.size() != m.rows())
			throw Error(ErrorCode::InvalidInput, std::string(what) + ": columns differ in length");
		m.col(static_cast<Eigen::Index>(c)) = col;
	}
	return m;
}

inline const json& field(const json& j, const char* key) {
	if (!j.is_object() || !j.contains(key))
		throw Error(ErrorCode::InvalidInput, std::string("missing field \"") + key + "\"");
	return j.at(key);
}

inline double number_field(const json& j, const char* key) {
	const json& f = field(j, key);
	if (!f.is_number())
		throw Error(ErrorCode::InvalidInput, std::string("field \"") + key + "\" must be a number");
	return f.get<double>();
}

// ---------------------------------------------------------------------------
// Parameter files
//
//   {"model": "gmm",      "weights": [..], "means": [[col], ..], "stddevs": [..]}
//   {"model": "lda",      "alpha": [..], "topics": [[col], ..]}
//   {"model": "mixreg",   "weights": [..], "regressors": [[col], ..], "noise_stddev": s}
//   {"model": "subspace", "weights": [..], "bases": [[[col], ..], ..], "noise_stddev": s}

inline json params_to_json(const ModelParams& p) {
	json j;
	j["model"] = std::string(to_string(kind_of(p)));
	std::visit(
	    [&](const auto& q) {
		    using T = std::decay_t<decltype(q)>;
		    if constexpr (std::is_same_v<T, GmmParams>) {
			    j["weights"] = to_json(q.weights);
			    j["means"] = columns_to_json(q.means);
			    j["stddevs"] = to_json(q.stddevs);
		    } else if constexpr (std::is_same_v<T, LdaParams>) {
			    j["alpha"] = to_json(q.alpha);
			    j["alpha0"] = q.alpha0();
			    j["topics"] = columns_to_json(q.topics);
		    } else if constexpr (std::is_same_v<T, MixRegParams>) {
			    j["weights"] = to_json(q.weights);
			    j["regressors"] = columns_to_json(q.regressors);
			    j["noise_stddev"] = q.noise_stddev;
		    } else {
			    j["weights"] = to_json(q.weights);
			    json bases = json::array();
			    for (const Matrix& u : q.bases)
				    bases.push_back(columns_to_json(u));
			    j["bases"] = std::move(bases);
			    j["noise_stddev"] = q.noise_stddev;
		    }
	    },
	    p);
	return j;
}

inline ModelParams params_from_json(const json& j) {
	const json& tag = field(j, "model");
	if (!tag.is_string())
		throw Error(ErrorCode::InvalidInput, "field \"model\" must be a string");
	ModelParams out;
	switch (parse_model_kind(tag.get<std::string>())) {
	case ModelKind::Gmm:
		out = GmmParams{vector_from_json(field(j, "weights"), "weights"), columns_from_json(field(j, "means"), "means"),
		                vector_from_json(field(j, "stddevs"), "stddevs")};
		break;
	case ModelKind::Lda: {
		LdaParams p{vector_from_json(field(j, "alpha"), "alpha"), columns_from_json(field(j, "topics"), "topics")};
		if (j.contains("alpha0") && std::abs(number_field(j, "alpha0") - p.alpha0()) > 1e-12 * std::max(1.0, p.alpha0()))
			throw Error(ErrorCode::InvalidInput, "lda: alpha0 must equal the sum of alpha");
		out = std::move(p);
		break;
	}
	case ModelKind::MixReg:
		out = MixRegParams{vector_from_json(field(j, "weights"), "weights"),
		                   columns_from_json(field(j, "regressors"), "regressors"), number_field(j, "noise_stddev")};
		break;
	case ModelKind::Subspace: {
		SubspaceParams p{vector_from_json(field(j, "weights"), "weights"), {}, number_field(j, "noise_stddev")};
		const json& bases = field(j, "bases");
		if (!bases.is_array())
			throw Error(ErrorCode::InvalidInput, "bases: expected a list of bases");
		for (const json& b : bases)
			p.bases.push_back(columns_from_json(b, "bases"));
		out = std::move(p);
		break;
	}
	}
	validate(out);
	return out;
}

inline json read_json_file(const std::string& path) {
	auto in = open_in(path);
	try {
		return json::parse(in);
	} catch (const json::exception& e) {
		throw Error(ErrorCode::InvalidInput, path + ": " + e.what());
	}
}

inline void write_json_file(const std::string& path, const json& j) {
	auto out = open_out(path);
	out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// UCI bag-of-words: three header lines (D, W, NNZ) then "docID wordID count" with 1-based ids.

struct UciCorpus {
	Eigen::Index vocab = 0;
	std::vector<BowDoc> docs;
};

inline UciCorpus read_uci(std::istream& is) {
	const auto read_count = [&](const char* what) {
		long long x = -1;
		if (!(is >> x) || x < 0)
			throw Error(ErrorCode::InvalidInput, std::string("uci: bad header field ") + what);
		return x;
	};
	const long long n_docs = read_count("D");
	const long long vocab = read_count("W");
	const long long nnz = read_count("NNZ");

	std::vector<std::vector<BowDoc::Entry>> entries(static_cast<std::size_t>(n_docs));
	long long seen = 0;
	long long doc = 0, word = 0, count = 0;
	while (is >> doc) {
		if (!(is >> word >> count))
			throw Error(ErrorCode::InvalidInput, "uci: malformed triple after entry " + std::to_string(seen));
		if (doc < 1 || doc > n_docs || word < 1 || word > vocab || count < 0)
			throw Error(ErrorCode::InvalidInput, "uci: triple " + std::to_string(seen + 1) + " out of range");
		entries[static_cast<std::size_t>(doc - 1)].emplace_back(static_cast<Eigen::Index>(word - 1), count);
		++seen;
	}
	if (!is.eof())
		throw Error(ErrorCode::InvalidInput, "uci: malformed triple after entry " + std::to_string(seen));
	if (seen != nnz)
		throw Error(ErrorCode::InvalidInput,
		            "uci: header declares " + std::to_string(nnz) + " entries, found " + std::to_string(seen));

	UciCorpus out;
	out.vocab = static_cast<Eigen::Index>(vocab);
	out.docs.reserve(entries.size());
	for (auto& e : entries)
		out.docs.emplace_back(std::move(e));
	return out;
}

inline void write_uci(std::ostream& os, const std::vector<BowDoc>& docs, Eigen::Index vocab) {
	std::size_t nnz = 0;
	for (const BowDoc& d : docs)
		nnz += d.entries().size();
	os << docs.size() << '\n' << vocab << '\n' << nnz << '\n';
	for (std::size_t i = 0; i < docs.size(); ++i)
		for (const auto& [w, c] : docs[i].entries())
			os << i + 1 << ' ' << w + 1 << ' ' << c << '\n';
}

inline UciCorpus read_uci_file(const std::string& path) {
	auto in = open_in(path);
	return read_uci(in);
}

/// One word per line, as in the UCI vocab.*.txt files.
inline std::vector<std::string> read_vocab_file(const std::string& path) {
	auto in = open_in(path);
	std::vector<std::string> words;
	std::string line;
	while (std::getline(in, line)) {
		if (!line.empty() && line.back() == '\r')
			line.pop_back();
		words.push_back(line);
	}
	return words;
}

} // namespace mixsearch::io
