#include "nlsql/database.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "nlsql/error.hpp"

namespace nlsql::db {

struct Database::State {
  duckdb_database handle = nullptr;
  std::string path;
  bool read_only = false;

  State() = default;
  State(const State&) = delete;
  State& operator=(const State&) = delete;
  ~State() {
    if (handle) duckdb_close(&handle);
  }
};

namespace {

// Owns a duckdb_config for the duration of an open call.
struct ConfigGuard {
  duckdb_config config = nullptr;
  ~ConfigGuard() {
    if (config) duckdb_destroy_config(&config);
  }
};

}  // namespace

Database Database::open(const std::filesystem::path& path, OpenOptions options) {
  ConfigGuard guard;
  if (duckdb_create_config(&guard.config) == DuckDBError) throw DatabaseError("cannot allocate duckdb config");
  if (options.read_only) duckdb_set_config(guard.config, "access_mode", "READ_ONLY");

  auto state = std::make_shared<State>();
  state->path = path.string();
  state->read_only = options.read_only;
  char* err = nullptr;
  if (duckdb_open_ext(state->path.c_str(), &state->handle, guard.config, &err) == DuckDBError) {
    std::string message = err ? err : "unknown error";
    if (err) duckdb_free(err);
    state->handle = nullptr;
    throw DatabaseError("cannot open database '" + state->path + "': " + message);
  }
  return Database(std::move(state));
}

Database Database::in_memory() {
  auto state = std::make_shared<State>();
  state->path = ":memory:";
  if (duckdb_open(nullptr, &state->handle) == DuckDBError) {
    state->handle = nullptr;
    throw DatabaseError("cannot open in-memory database");
  }
  return Database(std::move(state));
}

Connection Database::connect() const {
  duckdb_connection conn = nullptr;
  if (duckdb_connect(state_->handle, &conn) == DuckDBError) throw DatabaseError("cannot connect to " + state_->path);
  return Connection(state_, conn);
}

const std::string& Database::path() const { return state_->path; }
bool Database::read_only() const { return state_->read_only; }

Connection::Connection(Connection&& other) noexcept : db_(std::move(other.db_)), conn_(other.conn_) {
  other.conn_ = nullptr;
}

Connection& Connection::operator=(Connection&& other) noexcept {
  if (this != &other) {
    if (conn_) duckdb_disconnect(&conn_);
    db_ = std::move(other.db_);
    conn_ = other.conn_;
    other.conn_ = nullptr;
  }
  return *this;
}

Connection::~Connection() {
  if (conn_) duckdb_disconnect(&conn_);
}

void Connection::execute(std::string_view sql) {
  duckdb_result result;
  std::string owned(sql);
  if (duckdb_query(conn_, owned.c_str(), &result) == DuckDBError) {
    std::string message = duckdb_result_error(&result);
    duckdb_destroy_result(&result);
    throw DatabaseError(message);
  }
  duckdb_destroy_result(&result);
}

QueryResult Connection::query(std::string_view sql) {
  duckdb_result result;
  std::string owned(sql);
  if (duckdb_query(conn_, owned.c_str(), &result) == DuckDBError) {
    std::string message = duckdb_result_error(&result);
    duckdb_destroy_result(&result);
    throw DatabaseError(message);
  }
  QueryResult out;
  try {
    out = read_result(result);
  } catch (...) {
    duckdb_destroy_result(&result);
    throw;
  }
  duckdb_destroy_result(&result);
  return out;
}

namespace {

std::string type_name(duckdb_logical_type type) {
  switch (duckdb_get_type_id(type)) {
    case DUCKDB_TYPE_BOOLEAN: return "BOOLEAN";
    case DUCKDB_TYPE_TINYINT: return "TINYINT";
    case DUCKDB_TYPE_SMALLINT: return "SMALLINT";
    case DUCKDB_TYPE_INTEGER: return "INTEGER";
    case DUCKDB_TYPE_BIGINT: return "BIGINT";
    case DUCKDB_TYPE_UTINYINT: return "UTINYINT";
    case DUCKDB_TYPE_USMALLINT: return "USMALLINT";
    case DUCKDB_TYPE_UINTEGER: return "UINTEGER";
    case DUCKDB_TYPE_UBIGINT: return "UBIGINT";
    case DUCKDB_TYPE_FLOAT: return "FLOAT";
    case DUCKDB_TYPE_DOUBLE: return "DOUBLE";
    case DUCKDB_TYPE_TIMESTAMP: return "TIMESTAMP";
    case DUCKDB_TYPE_TIMESTAMP_S: return "TIMESTAMP_S";
    case DUCKDB_TYPE_TIMESTAMP_MS: return "TIMESTAMP_MS";
    case DUCKDB_TYPE_TIMESTAMP_NS: return "TIMESTAMP_NS";
    case DUCKDB_TYPE_TIMESTAMP_TZ: return "TIMESTAMP WITH TIME ZONE";
    case DUCKDB_TYPE_DATE: return "DATE";
    case DUCKDB_TYPE_TIME: return "TIME";
    case DUCKDB_TYPE_TIME_TZ: return "TIME WITH TIME ZONE";
    case DUCKDB_TYPE_INTERVAL: return "INTERVAL";
    case DUCKDB_TYPE_HUGEINT: return "HUGEINT";
    case DUCKDB_TYPE_UHUGEINT: return "UHUGEINT";
    case DUCKDB_TYPE_VARCHAR: return "VARCHAR";
    case DUCKDB_TYPE_BLOB: return "BLOB";
    case DUCKDB_TYPE_DECIMAL:
      return "DECIMAL(" + std::to_string(duckdb_decimal_width(type)) + "," +
             std::to_string(duckdb_decimal_scale(type)) + ")";
    case DUCKDB_TYPE_ENUM: return "ENUM";
    case DUCKDB_TYPE_LIST: return "LIST";
    case DUCKDB_TYPE_STRUCT: return "STRUCT";
    case DUCKDB_TYPE_MAP: return "MAP";
    case DUCKDB_TYPE_UUID: return "UUID";
    case DUCKDB_TYPE_SQLNULL: return "NULL";
    default: return "UNSUPPORTED";
  }
}

std::string two(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

std::string format_date(duckdb_date_struct d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", static_cast<int>(d.year), static_cast<int>(d.month),
                static_cast<int>(d.day));
  return buf;
}

std::string format_time(duckdb_time_struct t) {
  std::string out = two(t.hour) + ":" + two(t.min) + ":" + two(t.sec);
  if (t.micros != 0) {
    char buf[16];
    std::snprintf(buf, sizeof buf, ".%06d", static_cast<int>(t.micros));
    std::string frac = buf;
    while (frac.back() == '0') frac.pop_back();
    out += frac;
  }
  return out;
}

std::string format_timestamp_micros(int64_t micros) {
  duckdb_timestamp ts{micros};
  duckdb_timestamp_struct parts = duckdb_from_timestamp(ts);
  return format_date(parts.date) + " " + format_time(parts.time);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::string read_string(void* data, idx_t row) {
  auto* s = static_cast<duckdb_string_t*>(data) + row;
  return std::string(duckdb_string_t_data(s), duckdb_string_t_length(*s));
}

Value hugeint_value(duckdb_hugeint h) {
  const bool fits_positive = h.upper == 0 && h.lower <= static_cast<uint64_t>(INT64_MAX);
  const bool fits_negative = h.upper == -1 && h.lower >= (uint64_t{1} << 63);
  if (fits_positive || fits_negative) return static_cast<std::int64_t>(h.lower);
  return duckdb_hugeint_to_double(h);
}

double decimal_value(void* data, idx_t row, duckdb_logical_type type) {
  const double scale = std::pow(10.0, duckdb_decimal_scale(type));
  switch (duckdb_decimal_internal_type(type)) {
    case DUCKDB_TYPE_SMALLINT: return static_cast<int16_t*>(data)[row] / scale;
    case DUCKDB_TYPE_INTEGER: return static_cast<int32_t*>(data)[row] / scale;
    case DUCKDB_TYPE_BIGINT: return static_cast<double>(static_cast<int64_t*>(data)[row]) / scale;
    case DUCKDB_TYPE_HUGEINT: return duckdb_hugeint_to_double(static_cast<duckdb_hugeint*>(data)[row]) / scale;
    default: return std::nan("");
  }
}

Value read_cell(duckdb_vector vector, duckdb_logical_type type, idx_t row) {
  uint64_t* validity = duckdb_vector_get_validity(vector);
  if (validity && !duckdb_validity_row_is_valid(validity, row)) return std::monostate{};
  void* data = duckdb_vector_get_data(vector);
  switch (duckdb_get_type_id(type)) {
    case DUCKDB_TYPE_BOOLEAN: return static_cast<bool*>(data)[row];
    case DUCKDB_TYPE_TINYINT: return static_cast<std::int64_t>(static_cast<int8_t*>(data)[row]);
    case DUCKDB_TYPE_SMALLINT: return static_cast<std::int64_t>(static_cast<int16_t*>(data)[row]);
    case DUCKDB_TYPE_INTEGER: return static_cast<std::int64_t>(static_cast<int32_t*>(data)[row]);
    case DUCKDB_TYPE_BIGINT: return static_cast<int64_t*>(data)[row];
    case DUCKDB_TYPE_UTINYINT: return static_cast<std::int64_t>(static_cast<uint8_t*>(data)[row]);
    case DUCKDB_TYPE_USMALLINT: return static_cast<std::int64_t>(static_cast<uint16_t*>(data)[row]);
    case DUCKDB_TYPE_UINTEGER: return static_cast<std::int64_t>(static_cast<uint32_t*>(data)[row]);
    case DUCKDB_TYPE_UBIGINT: {
      uint64_t v = static_cast<uint64_t*>(data)[row];
      if (v <= static_cast<uint64_t>(INT64_MAX)) return static_cast<std::int64_t>(v);
      return static_cast<double>(v);
    }
    case DUCKDB_TYPE_HUGEINT: return hugeint_value(static_cast<duckdb_hugeint*>(data)[row]);
    case DUCKDB_TYPE_UHUGEINT: return duckdb_uhugeint_to_double(static_cast<duckdb_uhugeint*>(data)[row]);
    case DUCKDB_TYPE_FLOAT: return static_cast<double>(static_cast<float*>(data)[row]);
    case DUCKDB_TYPE_DOUBLE: return static_cast<double*>(data)[row];
    case DUCKDB_TYPE_DECIMAL: return decimal_value(data, row, type);
    case DUCKDB_TYPE_VARCHAR: return read_string(data, row);
    case DUCKDB_TYPE_DATE:
      return Timestamp{format_date(duckdb_from_date(static_cast<duckdb_date*>(data)[row]))};
    case DUCKDB_TYPE_TIME: return Timestamp{format_time(duckdb_from_time(static_cast<duckdb_time*>(data)[row]))};
    case DUCKDB_TYPE_TIMESTAMP:
      return Timestamp{format_timestamp_micros(static_cast<duckdb_timestamp*>(data)[row].micros)};
    case DUCKDB_TYPE_TIMESTAMP_TZ:
      return Timestamp{format_timestamp_micros(static_cast<duckdb_timestamp*>(data)[row].micros) + "+00"};
    case DUCKDB_TYPE_TIMESTAMP_S:
      return Timestamp{format_timestamp_micros(static_cast<int64_t*>(data)[row] * 1000000)};
    case DUCKDB_TYPE_TIMESTAMP_MS:
      return Timestamp{format_timestamp_micros(static_cast<int64_t*>(data)[row] * 1000)};
    case DUCKDB_TYPE_TIMESTAMP_NS:
      return Timestamp{format_timestamp_micros(floor_div(static_cast<int64_t*>(data)[row], 1000))};
    case DUCKDB_TYPE_INTERVAL: {
      auto iv = static_cast<duckdb_interval*>(data)[row];
      return std::to_string(iv.months) + " months " + std::to_string(iv.days) + " days " +
             std::to_string(iv.micros) + " us";
    }
    case DUCKDB_TYPE_ENUM: {
      idx_t index = 0;
      switch (duckdb_enum_internal_type(type)) {
        case DUCKDB_TYPE_UTINYINT: index = static_cast<uint8_t*>(data)[row]; break;
        case DUCKDB_TYPE_USMALLINT: index = static_cast<uint16_t*>(data)[row]; break;
        default: index = static_cast<uint32_t*>(data)[row]; break;
      }
      char* label = duckdb_enum_dictionary_value(type, index);
      std::string out = label ? label : "";
      duckdb_free(label);
      return out;
    }
    default: return "<" + type_name(type) + ">";
  }
}

// RAII for the logical types fetched per column.
struct LogicalTypes {
  std::vector<duckdb_logical_type> types;
  ~LogicalTypes() {
    for (auto& t : types) duckdb_destroy_logical_type(&t);
  }
};

}  // namespace

QueryResult read_result(duckdb_result& result, std::size_t max_rows) {
  QueryResult out;
  const idx_t ncols = duckdb_column_count(&result);
  LogicalTypes types;
  for (idx_t c = 0; c < ncols; ++c) {
    types.types.push_back(duckdb_column_logical_type(&result, c));
    out.columns.push_back({duckdb_column_name(&result, c), type_name(types.types.back())});
  }
  while (true) {
    duckdb_data_chunk chunk = duckdb_fetch_chunk(result);
    if (!chunk) break;
    const idx_t size = duckdb_data_chunk_get_size(chunk);
    if (size == 0) {
      duckdb_destroy_data_chunk(&chunk);
      break;
    }
    for (idx_t r = 0; r < size; ++r) {
      if (out.rows.size() >= max_rows) {
        out.truncated = true;
        break;
      }
      std::vector<Value> row;
      row.reserve(ncols);
      for (idx_t c = 0; c < ncols; ++c) {
        row.push_back(read_cell(duckdb_data_chunk_get_vector(chunk, c), types.types[c], r));
      }
      out.rows.push_back(std::move(row));
    }
    duckdb_destroy_data_chunk(&chunk);
    if (out.truncated) break;
  }
  return out;
}

}  // namespace nlsql::db
