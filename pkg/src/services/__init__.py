from src.services.scheduler import StageSchedule, format_schedule, parse_schedule

__all__ = ["StageSchedule", "format_schedule", "parse_schedule"]
