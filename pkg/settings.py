# settings.py
"""
Конфигурация по умолчанию для робастного свёрточного обучения словарей
со стохастическими окнами и встроенным отсечением выбросов.

Значения из YAML-конфига запуска и флаги командной строки переопределяют
эти константы.
"""
# --- ПУТИ К ДАННЫМ ---
OUTPUT_DIR = "results"

# Имена артефактов внутри выходной директории
MANIFEST_NAME = "manifest.json"
TRAIN_REPORT_NAME = "train_report.csv"
DICTIONARY_NAME = "dictionary.rst"
SUMMARY_NAME = "summary.json"

# --- ЛОГИРОВАНИЕ ---
LOG_LEVEL = "INFO"
# Как часто (в итерациях) писать прогресс обучения на уровне INFO
LOG_EVERY = 25

# --- СВЁРТКИ ---
# Прямая свёртка, если L * (T - L + 1) меньше порога, иначе FFT
CONV_FFT_THRESHOLD = 2 ** 14

# Степенной метод для константы Липшица
POWER_ITER_MAX = 200
POWER_ITER_TOL = 1e-6

# --- РАЗРЕЖЕННОЕ КОДИРОВАНИЕ (FISTA) ---
# Неточные коды во время обучения
TRAIN_N_FISTA = 50
# Точные коды для кодирования/детекции
ENCODE_N_FISTA = 500

# Кодирование по кускам для очень длинных сигналов
CHUNK_ENCODE_THRESHOLD = 10 ** 7
CHUNK_LENGTH = 10 ** 6
# Перекрытие кусков в длинах атома
CHUNK_OVERLAP_ATOMS = 1
# Проходы блочного уточнения после сшивки кусков
CHUNK_REFINE_SWEEPS = 3

# --- ОБУЧЕНИЕ СЛОВАРЯ ---
DEFAULT_N_ATOMS = 2
DEFAULT_ATOM_LENGTH = 64
DEFAULT_N_ITER = 200
DEFAULT_N_WINDOWS = 32
# Ширина окна по умолчанию: 10 длин атома
DEFAULT_WINDOW_ATOMS = 10
DEFAULT_LAMBDA_FRAC = 0.1
# Минимальное число окон для оценки lambda_max
LAMBDA_BATCH_WINDOWS = 32
# Попыток найти ненулевой кусок сигнала при инициализации атома
INIT_MAX_TRIES = 100

# Stochastic Line Search
SLS_ARMIJO = 0.1
SLS_BACKOFF = 0.5
SLS_GROWTH = 2.0
SLS_MAX_STEP = 10.0
SLS_MAX_HALVINGS = 30

# Адаптивные моменты (фиксированные гиперпараметры)
ADAM_STEP = 1e-2
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# --- ПОРОГИ ВЫБРОСОВ ---
ZSCORE_ALPHA = 3.0
MAD_ALPHA = 3.5
QUANTILE_ALPHA = 0.1
MAD_CONSISTENCY = 0.6745

# --- СИМУЛЯЦИЯ (параметры по умолчанию) ---
SIM_N_CHANNELS = 2
SIM_N_TIMES = 50_000
SIM_N_ATOMS = 2
SIM_ATOM_LENGTH = 64
SIM_SPARSITY = 0.004
SIM_NOISE_SIGMA = 0.1
SIM_N_SIGNALS = 20
SIM_AMPLITUDE_RANGE = (0.5, 1.5)
SIM_ARTIFACT_AMPLITUDE = 5.0

# --- ПОТОКИ СЛУЧАЙНЫХ ЧИСЕЛ ---
# Каждый поток: numpy.random.default_rng([seed, STREAM_*, *индексы])
STREAM_DICTIONARY = 1
STREAM_SIGNALS = 2
STREAM_INIT = 11
STREAM_LAMBDA = 12
STREAM_WINDOWS = 13

# --- БЕНЧМАРК ---
BENCH_LENGTHS = (10_000, 30_000, 100_000, 300_000, 1_000_000)
BENCH_WINDOW_ATOMS = (10, 20, 50, 100)
BENCH_N_ITER = 50
BENCH_LAMBDA_SWEEP = (0.05, 0.1, 0.3, 0.5)
