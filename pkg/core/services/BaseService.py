class BaseService:
    def __init__(self, repository=None):
        self.repository = repository
