"""
Result Schemas
==============
Registros emitidos pelos comandos do laboratório
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ResultRecord(BaseModel):
    """Linha do arquivo de resultados (JSON por linha)"""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    variant: str = Field(..., description="Variante avaliada (ex: gmm-rks)")
    L: Optional[int] = Field(None, description="Comprimento de sequência")
    seed: int = Field(..., description="Semente raiz efetiva")
    metric: str = Field(..., description="Nome da métrica")
    value: Optional[float] = Field(None, description="Valor da métrica")
    config_hash: str = Field(..., description="SHA-256 da configuração resolvida")
    version: str = Field(..., description="Versão do código")
    extra: Dict[str, Any] = Field(default_factory=dict, description="Campos adicionais")


class CheckResult(BaseModel):
    """Resultado de uma verificação de aceitação"""
    name: str = Field(..., description="Nome da verificação")
    passed: bool = Field(..., description="Se passou")
    value: Optional[float] = Field(None, description="Pior valor observado")
    tolerance: Optional[float] = Field(None, description="Tolerância aplicada")
    detail: Dict[str, Any] = Field(default_factory=dict, description="Detalhes")


class BenchResult(BaseModel):
    """Medição de uma variante em um comprimento"""
    variant: str = Field(..., description="Variante")
    length: int = Field(..., description="Comprimento L")
    seconds_per_step: Optional[float] = Field(None, description="Mediana do tempo por passo")
    aux_bytes: Optional[int] = Field(None, description="Pico de memória auxiliar instrumentada")
    steps: int = Field(0, description="Passos medidos")
    failed: bool = Field(False, description="Se a medição falhou (ex: falta de memória)")
    error: Optional[str] = Field(None, description="Mensagem de erro")
    os_peak_kb: Optional[int] = Field(None, description="Pico de RSS do processo (informativo)")


class VarianceReport(BaseModel):
    """Métricas de estocasticidade sobre repetições com Ω novo"""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    runs: int = Field(..., description="Repetições por exemplo")
    rsd: List[float] = Field(..., description="Desvio padrão relativo por exemplo")
    rsd_infinite: List[bool] = Field(..., description="Média exatamente zero (RSD = +inf)")
    pi: List[int] = Field(..., description="Inconsistência de predição por exemplo")
    va: float = Field(..., description="Acurácia por votação")
    accuracy: float = Field(..., description="Acurácia média de uma execução")
    agv: float = Field(..., description="Razão VA / acurácia")
    outputs: List[List[float]] = Field(default_factory=list, description="Saídas brutas (exemplo × execução)")


class GradientStatistics(BaseModel):
    """Estatísticas de gradiente na camada do classificador"""
    abs_mean: float = Field(..., description="Média dos valores absolutos, média sobre neurônios")
    std: float = Field(..., description="Desvio padrão entre repetições, média sobre neurônios")
    neurons: int = Field(..., description="Neurônios da camada")
    datapoints: int = Field(..., description="Exemplos avaliados")
    repetitions: int = Field(..., description="Repetições com Ω novo")


class TrainingResult(BaseModel):
    """Curva de aprendizado e checkpoints de um treino"""
    variant: str = Field(..., description="Variante")
    steps: List[int] = Field(default_factory=list, description="Passos avaliados")
    losses: List[float] = Field(default_factory=list, description="Loss de treino em cada avaliação")
    accuracies: List[float] = Field(default_factory=list, description="Acurácia de validação em cada avaliação")
    checkpoints: Dict[str, str] = Field(default_factory=dict, description="Limiar → caminho do checkpoint")
    checkpoint_accuracies: Dict[str, float] = Field(default_factory=dict, description="Limiar → acurácia no disparo")
    final_accuracy: float = Field(0.0, description="Última acurácia de validação")
    reached_target: bool = Field(False, description="Se atingiu a acurácia alvo")
    last_checkpoint: Optional[str] = Field(None, description="Checkpoint mais recente")
