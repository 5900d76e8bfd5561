import json
import threading
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from dfcflow.errors import ConfigError, ValuationError
from dfcflow.market import DAY, HOUR, PriceSeries, fetch_prices, make_valuer
from dfcflow.registry import Currency

F = Fraction
T0 = 1_600_000_000 - (1_600_000_000 % HOUR)  # aligned to an hour


def hourly_series(points):
    series = PriceSeries()
    for i, price in enumerate(points):
        series.add_point("ETH", T0 + i * HOUR, F(price))
    return series


def test_query_exactly_at_a_point():
    series = hourly_series(["100.5", "101.25"])
    assert series.price_at("ETH", T0 + HOUR) == F("101.25")


def test_carry_forward_within_the_hour():
    series = hourly_series(["100.5", "101.25"])
    assert series.price_at("ETH", T0 + 30 * 60) == F("100.5")


def test_staleness_bound_is_twice_granularity():
    series = hourly_series(["100.5"])
    assert series.price_at("ETH", T0 + 2 * HOUR) == F("100.5")  # exactly at bound
    with pytest.raises(ValuationError) as err:
        series.price_at("ETH", T0 + 3 * HOUR)
    assert err.value.key == "ETH"
    assert err.value.timestamp == T0 + 3 * HOUR


def test_query_before_first_point_fails():
    series = hourly_series(["100.5"])
    with pytest.raises(ValuationError):
        series.price_at("ETH", T0 - 1)


def test_daily_usdt_has_a_two_day_bound():
    series = PriceSeries()
    series.add_point("USDT", T0, F("1.0002"))
    assert series.price_at("USDT", T0 + 36 * HOUR) == F("1.0002")
    with pytest.raises(ValuationError):
        series.price_at("USDT", T0 + 2 * DAY + 1)


def test_adding_later_points_never_changes_earlier_answers():
    series = hourly_series(["100.5", "101.25"])
    answers = [series.price_at("ETH", T0 + offset) for offset in (0, 1800, HOUR)]
    series.add_point("ETH", T0 + 2 * HOUR, F("150"))
    assert [series.price_at("ETH", T0 + offset) for offset in (0, 1800, HOUR)] == answers


def test_timestamps_must_strictly_increase():
    series = hourly_series(["100.5"])
    with pytest.raises(ConfigError):
        series.add_point("ETH", T0, F("101"))


def test_prices_must_be_positive():
    series = PriceSeries()
    with pytest.raises(ConfigError):
        series.add_point("ETH", T0, F(0))


def test_unknown_price_key_rejected():
    series = PriceSeries()
    with pytest.raises(ConfigError):
        series.add_point("DOGE", T0, F(1))


def test_value_usd_linearity_and_scaling():
    series = hourly_series(["1000.00"])
    weth = Currency("WETH", 18, "ETH")
    a, b = F(17, 3), F(5, 7)
    total = series.value_usd(a + b, weth, T0)
    assert total == series.value_usd(a, weth, T0) + series.value_usd(b, weth, T0)
    assert series.value_usd(F(2), weth, T0) == F(2000)
    assert series.value_usd(F(0), weth, T0) == F(0)


def test_usdc_value_matches_spreadsheet_oracle():
    # hand-computed before the implementation: 1234.56 * 0.9991 = 1233.448896
    series = PriceSeries()
    series.add_point("USDC", T0, F("0.9991"))
    usdc = Currency("USDC", 6, "USDC")
    assert series.value_usd(F("1234.56"), usdc, T0) == F("1233.448896")


def test_csv_round_trip_sorts_rows(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "price_key,timestamp,price_usd\n"
        f"ETH,{T0 + HOUR},101.25\n"
        f"BTC,{T0},9000\n"
        f"ETH,{T0},100.5\n"
    )
    series = PriceSeries.from_csv(path)
    assert series.price_at("ETH", T0) == F("100.5")
    assert series.price_at("BTC", T0) == F(9000)
    out = tmp_path / "out.csv"
    series.to_csv(out)
    assert PriceSeries.from_csv(out).price_at("ETH", T0 + HOUR) == F("101.25")


def test_make_valuer_uses_price_key_mapping():
    series = hourly_series(["250"])
    currencies = {"WETH": Currency("WETH", 18, "ETH")}
    valuer = make_valuer(series, currencies)
    assert valuer("WETH", F(3), T0) == F(750)


class _CandleHandler(BaseHTTPRequestHandler):
    def do_GET(self):
        # /candles/<SYMBOL>?start=..&end=..
        symbol = self.path.split("/")[2].split("?")[0]
        base = {"BTC-USD": 9000, "ETH-USD": 210}[symbol]
        candles = [[T0 + i * HOUR, 1, 2, base + i, 4, 5] for i in range(3)]
        body = json.dumps(candles).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def candle_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _CandleHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_fetch_prices_from_candle_endpoint(candle_server):
    series = fetch_prices({
        "url_template": candle_server + "/candles/{key}?start={start}&end={end}",
        "key_map": {"BTC": "BTC-USD", "ETH": "ETH-USD"},
        "start": T0,
        "end": T0 + 3 * HOUR,
        "timestamp_field": 0,
        "price_field": 3,
    })
    assert series.price_at("BTC", T0 + HOUR) == F(9001)
    assert series.price_at("ETH", T0 + 2 * HOUR) == F(212)


def test_fetch_prices_requires_template_and_map():
    with pytest.raises(ConfigError):
        fetch_prices({"url_template": "http://x/{key}"})
